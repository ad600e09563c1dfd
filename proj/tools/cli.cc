/*
 * Copyright 2026 The simattr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "CLI11.hpp"
#include "manifest.h"
#include "simattr/attribution.h"
#include "simattr/brittleness.h"
#include "simattr/embedding_store.h"
#include "simattr/errors.h"
#include "simattr/lds.h"
#include "simattr/oracle.h"
#include "simattr/parallel.h"

namespace simattr::cli {
namespace {

namespace fs = std::filesystem;

struct Globals {
  uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir = ".";
  std::string name;
};

struct TrainFlags {
  int epochs = 50;
  double learning_rate = 0.1;
  double weight_decay = 1e-4;
  std::size_t batch_size = 0;

  TrainConfig config(uint64_t seed) const {
    return {epochs, learning_rate, weight_decay, batch_size, seed};
  }
};

struct EsvmFlags {
  double c_pos = 0.5;
  double c_neg = 0.01;
  int max_iters = 100000;
  double tol = 1e-9;

  EsvmParams params(uint64_t seed) const { return {c_pos, c_neg, max_iters, tol, seed}; }
};

// Input flags shared by every command that scores targets.
struct ScoringFlags {
  std::string train;
  std::string targets;
  std::string method;
  std::string filter;
  bool normalize = false;
  double keep_fraction = 0.05;
};

const std::vector<std::string> kMethods = {"l2",      "cosine",        "esvm",
                                           "gradcos", "signed-sparse", "random"};

void add_globals(CLI::App* sub, Globals& g, std::string default_name) {
  g.name = std::move(default_name);
  sub->add_option("--seed", g.seed, "Base random seed")->capture_default_str();
  sub->add_option("--jobs", g.jobs, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--out-dir", g.out_dir, "Directory for outputs and the manifest")
      ->capture_default_str();
}

void add_train_flags(CLI::App* sub, TrainFlags& t) {
  sub->add_option("--epochs", t.epochs, "Oracle training epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--lr", t.learning_rate, "Oracle peak learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--weight-decay", t.weight_decay, "Oracle L2 weight decay")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--batch-size", t.batch_size, "Mini-batch size (0 = min(512, n))")
      ->capture_default_str();
}

void add_esvm_flags(CLI::App* sub, EsvmFlags& e) {
  sub->add_option("--c-pos", e.c_pos, "Exemplar SVM positive penalty")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--c-neg", e.c_neg, "Exemplar SVM negative penalty")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--esvm-max-iters", e.max_iters, "Exemplar SVM step cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--esvm-tol", e.tol, "Exemplar SVM KKT tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_scoring_flags(CLI::App* sub, ScoringFlags& s, bool method_required) {
  sub->add_option("--train", s.train, "Training embedding store")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--targets", s.targets, "Target embedding store")
      ->required()
      ->check(CLI::ExistingFile);
  auto* method = sub->add_option("--method", s.method, "Attribution method")
                     ->check(CLI::IsMember(kMethods));
  if (method_required) method->required();
  sub->add_option("--filter", s.filter,
                  "Candidate filter: same-class or all (default: all for gradcos and "
                  "random, same-class otherwise)")
      ->check(CLI::IsMember({"same-class", "all"}));
  sub->add_flag("--normalize", s.normalize, "Scale embeddings to unit norm first");
  sub->add_option("--keep-fraction", s.keep_fraction, "Signed-sparse keep fraction")
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0))
      ->capture_default_str();
}

CandidateFilter resolve_filter(const ScoringFlags& s, Method m) {
  if (!s.filter.empty()) return parse_filter(s.filter);
  return m == Method::kGradCos || m == Method::kRandom ? CandidateFilter::kAll
                                                       : CandidateFilter::kSameClass;
}

nlohmann::json resolved_config(const CLI::App* sub) {
  nlohmann::json cfg = nlohmann::json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name()
                                                        : opt->get_lnames().front();
    if (name == "help") continue;
    if (!opt->results().empty()) {
      const auto& r = opt->results();
      cfg[name] = r.size() == 1 ? nlohmann::json(r.front()) : nlohmann::json(r);
    } else if (opt->get_type_size() == 0) {
      cfg[name] = false;
    } else {
      cfg[name] = opt->get_default_str();
    }
  }
  return cfg;
}

// Collects the manifest and buffered outputs of one command; writes
// everything at the end.
class Run {
 public:
  Run(std::string command, std::vector<std::string> args) {
    manifest_.command = std::move(command);
    manifest_.args = std::move(args);
    manifest_.started_at = utc_now();
  }

  void input(const fs::path& p) { manifest_.inputs[p.string()] = sha256_file(p); }
  void seed(const std::string& key, uint64_t v) { manifest_.seeds[key] = v; }
  void output(const fs::path& p, std::string contents) {
    pending_.emplace_back(p, std::move(contents));
  }

  void commit(const fs::path& manifest_path, const CLI::App* sub) {
    manifest_.config = resolved_config(sub);
    for (const auto& [path, contents] : pending_) {
      write_atomically(path, contents);
      manifest_.outputs[path.string()] = sha256_file(path);
    }
    manifest_.finished_at = utc_now();
    write_atomically(manifest_path, manifest_.to_json().dump(2) + "\n");
  }

 private:
  RunManifest manifest_;
  std::vector<std::pair<fs::path, std::string>> pending_;
};

EmbeddingSet load_store(Run& run, const std::string& path, bool normalize) {
  run.input(path);
  EmbeddingSet set = load_embeddings(path);
  return normalize ? unit_normalized(set) : set;
}

std::vector<TargetSample> all_targets(const EmbeddingSet& train, const EmbeddingSet& store) {
  if (store.dim() != train.dim()) {
    throw DimensionError(fmt::format("target store has dimension {}, training store has {}",
                                     store.dim(), train.dim()));
  }
  if (store.num_classes() != train.num_classes()) {
    throw DimensionError(fmt::format("target store has {} classes, training store has {}",
                                     store.num_classes(), train.num_classes()));
  }
  std::vector<TargetSample> out;
  out.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(store.target(i));
  return out;
}

fs::path out_path(const Globals& g, const std::string& suffix) {
  return fs::path(g.out_dir) / (g.name + suffix);
}

// Scores every target; failures are reported per target.
struct ScoredTarget {
  ScoreVector scores;
  std::optional<std::string> error;
};

std::vector<ScoredTarget> score_targets(const EmbeddingSet& set,
                                        const std::vector<TargetSample>& targets, Method method,
                                        const EsvmParams& esvm, const Model* model,
                                        uint64_t seed, double keep_fraction, int jobs) {
  std::vector<ScoredTarget> out(targets.size());
  parallel_for(targets.size(), jobs, [&](std::size_t t) {
    try {
      out[t].scores = score(method, set, targets[t], esvm, model, seed, keep_fraction);
    } catch (const Error& e) {
      out[t].error = e.what();
    }
  });
  return out;
}

std::optional<Model> model_for(Method method, const EmbeddingSet& set, const TrainConfig& cfg) {
  if (method != Method::kGradCos) return std::nullopt;
  return train(set, nullptr, cfg);
}

// ---- gen -----------------------------------------------------------------

struct GenCommand {
  Globals g;
  SyntheticConfig cfg;
  std::string output;

  void attach(CLI::App* sub) {
    add_globals(sub, g, "gen");
    sub->add_option("--classes", cfg.num_classes, "Number of classes")
        ->check(CLI::Range(2u, 1u << 20))
        ->capture_default_str();
    sub->add_option("--per-class", cfg.samples_per_class, "Samples per class")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--dim", cfg.d, "Embedding dimension")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--spread", cfg.cluster_spread, "Per-coordinate noise std")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--distance", cfg.inter_class_distance, "Minimum center distance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("-o,--output", output, "Output store file")->required();
  }

  void execute(Run& run, const CLI::App* sub, std::ostream& out) {
    cfg.seed = g.seed;
    run.seed("synthetic", cfg.seed);
    const EmbeddingSet set = generate_synthetic(cfg);
    const auto bytes = serialize_embeddings(set);
    run.output(output, std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    run.commit(fs::path(output + ".manifest.json"), sub);
    fmt::print(out, "wrote {} samples (d={}, classes={}) to {}\n", set.size(), set.dim(),
               set.num_classes(), output);
  }
};

// ---- rank ----------------------------------------------------------------

struct RankCommand {
  Globals g;
  ScoringFlags s;
  TrainFlags t;
  EsvmFlags e;
  std::size_t k = kDefaultSupportK;

  void attach(CLI::App* sub) {
    add_globals(sub, g, "");
    add_scoring_flags(sub, s, true);
    add_train_flags(sub, t);
    add_esvm_flags(sub, e);
    sub->add_option("--k", k, "Ranked indices per target")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--name", g.name, "Output file prefix (default: the method)");
  }

  void execute(Run& run, const CLI::App* sub, std::ostream& out) {
    if (g.name.empty()) g.name = s.method;
    const Method method = parse_method(s.method);
    const EmbeddingSet set = load_store(run, s.train, s.normalize);
    const EmbeddingSet target_store = load_store(run, s.targets, s.normalize);
    const auto targets = all_targets(set, target_store);
    run.seed("base", g.seed);
    const TrainConfig cfg = t.config(g.seed);
    const auto model = model_for(method, set, cfg);
    const auto scored = score_targets(set, targets, method, e.params(g.seed),
                                      model ? &*model : nullptr, g.seed, s.keep_fraction,
                                      g.jobs);
    const CandidateFilter filter = resolve_filter(s, method);

    std::ostringstream csv;
    write_ranking_header(csv);
    std::size_t failed = 0;
    for (std::size_t q = 0; q < targets.size(); ++q) {
      if (scored[q].error) {
        fmt::print(csv, "# target {}: {}\n", targets[q].id, *scored[q].error);
        ++failed;
        continue;
      }
      write_ranking_rows(csv, set, scored[q].scores,
                         rank(scored[q].scores, set, targets[q], filter, k));
    }
    const fs::path path = out_path(g, ".ranking.csv");
    run.output(path, csv.str());
    run.commit(out_path(g, ".manifest.json"), sub);
    fmt::print(out, "ranked {} targets ({} failed) with {} / {} into {}\n", targets.size(),
               failed, s.method, filter_name(filter), path.string());
  }
};

// ---- support -------------------------------------------------------------

struct SupportCommand {
  Globals g;
  ScoringFlags s;
  TrainFlags t;
  EsvmFlags e;
  std::string ranking;
  std::string mode = "remove";
  std::string oracle = "softmax";
  int budget = kDefaultBudget;
  int n_test = kDefaultTests;
  std::size_t k = kDefaultSupportK;
  bool only_correct = false;
  bool svg = false;

  void attach(CLI::App* sub) {
    add_globals(sub, g, "");
    add_scoring_flags(sub, s, false);
    add_train_flags(sub, t);
    add_esvm_flags(sub, e);
    auto* rk = sub->add_option("--ranking", ranking, "Ranking CSV produced by `rank`")
                   ->check(CLI::ExistingFile);
    auto* method = sub->get_option("--method");
    rk->excludes(method);
    method->excludes(rk);
    sub->add_option("--mode", mode, "remove or mislabel")
        ->check(CLI::IsMember({"remove", "mislabel"}))
        ->capture_default_str();
    sub->add_option("--budget", budget, "Bisection budget")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--n-test", n_test, "Trainings per probe")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--k", k, "Largest subset size searched")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--oracle", oracle,
                    "softmax, never, or threshold:<T> (closed-form, for testing)")
        ->capture_default_str();
    sub->add_flag("--only-correct", only_correct,
                  "Keep only targets the unmodified ensemble classifies correctly");
    sub->add_flag("--svg", svg, "Also write an SVG plot of the CDF");
    sub->add_option("--name", g.name, "Output file prefix (default: <method>_<mode>)");
  }

  std::unique_ptr<CounterfactualOracle> make_oracle(const EmbeddingSet& set,
                                                    const TrainConfig& cfg) const {
    if (oracle == "softmax") return std::make_unique<RetrainingOracle>(set, cfg);
    if (oracle == "never") return std::make_unique<ThresholdOracle>(std::nullopt);
    if (oracle.rfind("threshold:", 0) == 0) {
      try {
        return std::make_unique<ThresholdOracle>(std::stoull(oracle.substr(10)));
      } catch (const std::exception&) {
      }
    }
    throw CLI::ValidationError("--oracle", "expected softmax, never or threshold:<T>");
  }

  void execute(Run& run, const CLI::App* sub, std::ostream& out) {
    if (s.method.empty() && ranking.empty()) {
      throw CLI::RequiredError("--method or --ranking");
    }
    if (g.name.empty()) {
      std::string base = s.method;
      if (base.empty()) {
        base = fs::path(ranking).stem().string();
        const std::string suffix = ".ranking";
        if (base.ends_with(suffix)) base.resize(base.size() - suffix.size());
      }
      g.name = base + "_" + mode;
    }
    const SupportMode support_mode = parse_mode(mode);
    const EmbeddingSet set = load_store(run, s.train, s.normalize);
    const EmbeddingSet target_store = load_store(run, s.targets, s.normalize);
    auto targets = all_targets(set, target_store);
    const TrainConfig cfg = t.config(g.seed);
    run.seed("base", g.seed);
    const bool retraining = oracle == "softmax";
    auto support_oracle = make_oracle(set, cfg);

    // Unmodified ensemble with the seeds mislabel_target_class uses.
    std::vector<Model> ensemble;
    if (retraining && (support_mode == SupportMode::kMislabel || only_correct)) {
      ensemble.resize(n_test);
      parallel_for(ensemble.size(), g.jobs, [&](std::size_t r) {
        TrainConfig rc = cfg;
        rc.seed = cfg.seed + r;
        ensemble[r] = train(set, nullptr, rc);
      });
    }
    if (only_correct && retraining) {
      std::erase_if(targets, [&](const TargetSample& z) {
        int correct = 0;
        for (const Model& m : ensemble) correct += predict(m, z.feature).label == z.label;
        return 2 * correct <= static_cast<int>(ensemble.size());
      });
      if (targets.empty()) throw ValidationError("no correctly classified targets remain");
    }

    std::vector<std::optional<std::string>> errors(targets.size());
    std::vector<RankedIndices> rankings(targets.size());
    if (!ranking.empty()) {
      run.input(ranking);
      std::ifstream in(ranking);
      const auto table = read_ranking_csv(in);
      const CandidateFilter filter =
          s.filter.empty() ? CandidateFilter::kSameClass : parse_filter(s.filter);
      for (std::size_t q = 0; q < targets.size(); ++q) {
        const auto it = table.find(targets[q].id);
        if (it == table.end()) {
          errors[q] = "no ranking for target";
          continue;
        }
        auto indices = it->second;
        if (indices.size() > k) indices.resize(k);
        for (std::size_t i : indices) {
          if (i >= set.size()) {
            throw ValidationError(fmt::format("ranking index {} out of range", i));
          }
        }
        rankings[q] = RankedIndices{std::move(indices), k, filter};
      }
    } else {
      const Method method = parse_method(s.method);
      const auto model = model_for(method, set, cfg);
      const auto scored = score_targets(set, targets, method, e.params(g.seed),
                                        model ? &*model : nullptr, g.seed, s.keep_fraction,
                                        g.jobs);
      const CandidateFilter filter = resolve_filter(s, method);
      for (std::size_t q = 0; q < targets.size(); ++q) {
        if (scored[q].error) {
          errors[q] = scored[q].error;
          continue;
        }
        rankings[q] = rank(scored[q].scores, set, targets[q], filter, k);
      }
    }

    std::vector<SupportQuery> queries;
    std::vector<std::size_t> query_target;
    for (std::size_t q = 0; q < targets.size(); ++q) {
      if (errors[q]) continue;
      SupportQuery query;
      query.target = targets[q];
      query.ranked = rankings[q];
      query.mode = support_mode;
      query.budget = budget;
      query.n_test = n_test;
      if (support_mode == SupportMode::kMislabel) {
        query.new_label = retraining ? mislabel_target_class(ensemble, targets[q])
                                     : (targets[q].label + 1) % set.num_classes();
      }
      queries.push_back(std::move(query));
      query_target.push_back(q);
    }
    const auto computed = compute_supports(queries, *support_oracle, g.jobs);

    std::vector<SupportResult> results(targets.size());
    for (std::size_t q = 0; q < targets.size(); ++q) {
      results[q].target_id = targets[q].id;
      results[q].mode = support_mode;
      results[q].k = k;
      results[q].error = errors[q];
    }
    for (std::size_t r = 0; r < computed.size(); ++r) results[query_target[r]] = computed[r];
    for (auto& r : results) r.k = k;

    const BrittlenessReport report = cdf_and_auc(results, k);
    std::ostringstream support_csv, cdf_csv;
    write_support_csv(support_csv, results);
    write_report_csv(cdf_csv, report);
    run.output(out_path(g, ".support.csv"), support_csv.str());
    run.output(out_path(g, ".cdf.csv"), cdf_csv.str());
    if (svg) {
      std::ostringstream plot;
      const std::vector<std::string> labels = {g.name};
      write_cdf_svg(plot, std::span(&report, 1), labels);
      run.output(out_path(g, ".cdf.svg"), plot.str());
    }
    run.commit(out_path(g, ".manifest.json"), sub);
    fmt::print(out, "{}: auc={} found={}/{} failed={} k={}\n", g.name, report.auc,
               report.found, results.size(), report.failed, k);
  }
};

// ---- compare -------------------------------------------------------------

struct CompareCommand {
  Globals g;
  std::string a;
  std::string b;

  void attach(CLI::App* sub) {
    add_globals(sub, g, "compare");
    sub->add_option("--a", a, "Support CSV of the first method")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--b", b, "Support CSV of the second method")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--name", g.name, "Output file prefix")->capture_default_str();
  }

  void execute(Run& run, const CLI::App* sub, std::ostream& out) {
    run.input(a);
    run.input(b);
    std::ifstream ia(a), ib(b);
    const auto ra = read_support_csv(ia);
    const auto rb = read_support_csv(ib);
    const WinRate w = win_rate(ra, rb);
    run.output(out_path(g, ".compare.csv"),
               fmt::format("smaller,equal,larger\n{},{},{}\n", w.smaller, w.equal, w.larger));
    run.commit(out_path(g, ".manifest.json"), sub);
    fmt::print(out, "smaller={} equal={} larger={} targets={}\n", w.smaller, w.equal,
               w.larger, ra.size());
  }
};

// ---- lds -----------------------------------------------------------------

struct LdsCommand {
  Globals g;
  ScoringFlags s;
  TrainFlags t;
  EsvmFlags e;
  double alpha = 0.5;
  std::size_t m = 64;
  bool masks_out = false;

  void attach(CLI::App* sub) {
    add_globals(sub, g, "");
    s.method = "signed-sparse";
    add_scoring_flags(sub, s, false);
    sub->get_option("--method")->capture_default_str();
    add_train_flags(sub, t);
    add_esvm_flags(sub, e);
    sub->add_option("--alpha", alpha, "Subset fraction, in (0, 1)")
        ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0 - 1e-12))
        ->capture_default_str();
    sub->add_option("--m", m, "Number of random subsets (>= 2)")
        ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()))
        ->capture_default_str();
    sub->add_flag("--masks-out", masks_out, "Also write the bit-packed subset masks");
    sub->add_option("--name", g.name, "Output file prefix (default: <method>)");
  }

  void execute(Run& run, const CLI::App* sub, std::ostream& out) {
    if (g.name.empty()) g.name = s.method;
    const Method method = parse_method(s.method);
    const EmbeddingSet set = load_store(run, s.train, s.normalize);
    const EmbeddingSet target_store = load_store(run, s.targets, s.normalize);
    const auto targets = all_targets(set, target_store);
    run.seed("base", g.seed);
    const TrainConfig cfg = t.config(g.seed);

    const auto masks = sample_subsets(set.size(), alpha, m, g.seed);
    const auto margins = subset_margins(set, masks, targets, cfg, softmax_trainer(), g.jobs);
    const auto model = model_for(method, set, cfg);
    const auto scored = score_targets(set, targets, method, e.params(g.seed),
                                      model ? &*model : nullptr, g.seed, s.keep_fraction,
                                      g.jobs);
    std::vector<ScoreVector> taus;
    for (const auto& st : scored) {
      if (st.error) throw Error(*st.error);
      ScoreVector tau = st.scores;
      // Samples the method excludes (other classes under esvm) contribute 0.
      for (double& v : tau.scores) {
        if (!std::isfinite(v)) v = 0.0;
      }
      taus.push_back(std::move(tau));
    }
    const LdsResult result = evaluate_lds(taus, margins, masks);
    std::ostringstream csv;
    write_lds_csv(csv, result);
    run.output(out_path(g, ".lds.csv"), csv.str());
    if (masks_out) {
      const fs::path tmp = out_path(g, ".masks.bin.build");
      fs::create_directories(tmp.parent_path());
      save_masks(masks, tmp);
      std::ifstream in(tmp, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      in.close();
      fs::remove(tmp);
      run.output(out_path(g, ".masks.bin"), std::move(bytes));
    }
    run.commit(out_path(g, ".manifest.json"), sub);
    fmt::print(out, "{}: mean_rho={} targets={} m={} alpha={} degenerate={}\n", g.name,
               result.mean_rho, result.per_target_rho.size(), result.m, result.alpha,
               result.degenerate);
  }
};

// ---- replay --------------------------------------------------------------

int replay(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  const RunManifest recorded = read_manifest(manifest_path);
  if (recorded.command == "replay") throw ValidationError("cannot replay a replay");
  const int code = run(recorded.args, out, err);
  if (code != 0) return code;
  std::size_t mismatched = 0;
  for (const auto& [path, digest] : recorded.outputs) {
    const std::string now = fs::exists(path) ? sha256_file(path) : "missing";
    if (now != digest) {
      ++mismatched;
      fmt::print(err, "digest mismatch for {}: recorded {}, now {}\n", path, digest, now);
    }
  }
  fmt::print(out, "replay: {}/{} outputs identical\n", recorded.outputs.size() - mismatched,
             recorded.outputs.size());
  return mismatched == 0 ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Similarity-based training-data attribution and brittleness evaluation",
               "simattr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GenCommand gen;
  RankCommand rank_cmd;
  SupportCommand support;
  CompareCommand compare;
  LdsCommand lds;
  std::string manifest_path;

  auto* gen_sub = app.add_subcommand("gen", "Generate a synthetic Gaussian-mixture store");
  gen.attach(gen_sub);
  auto* rank_sub = app.add_subcommand("rank", "Score and rank training samples per target");
  rank_cmd.attach(rank_sub);
  auto* support_sub =
      app.add_subcommand("support", "Estimate removal or mislabel support by bisection");
  support.attach(support_sub);
  auto* compare_sub = app.add_subcommand("compare", "Win-rate between two support CSVs");
  compare.attach(compare_sub);
  auto* lds_sub = app.add_subcommand("lds", "Linear datamodeling score");
  lds.attach(lds_sub);
  auto* replay_sub =
      app.add_subcommand("replay", "Re-run a manifest and verify its output digests");
  replay_sub->add_option("manifest", manifest_path, "Manifest JSON")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (*replay_sub) return replay(manifest_path, out, err);
    Run run_record(app.get_subcommands().front()->get_name(), args);
    if (*gen_sub) gen.execute(run_record, gen_sub, out);
    if (*rank_sub) rank_cmd.execute(run_record, rank_sub, out);
    if (*support_sub) support.execute(run_record, support_sub, out);
    if (*compare_sub) compare.execute(run_record, compare_sub, out);
    if (*lds_sub) lds.execute(run_record, lds_sub, out);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  }
}

}  // namespace simattr::cli
