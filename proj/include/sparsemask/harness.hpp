#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "sparsemask/attack.hpp"
#include "sparsemask/errors.hpp"
#include "sparsemask/image_io.hpp"
#include "sparsemask/oracle.hpp"
#include "sparsemask/random.hpp"

namespace sparsemask {

struct ManifestEntry {
  std::string file;
  std::size_t label = 0;
};

/// Reads `manifest.json` ([{"file": ..., "label": ...}, ...]) from a dataset directory.
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream f(path);
  if (!f) throw ConfigError("dataset has no manifest: " + path.string());
  try {
    std::vector<ManifestEntry> out;
    for (const auto& e : nlohmann::json::parse(f))
      out.push_back({e.at("file").get<std::string>(), e.at("label").get<std::size_t>()});
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct EvalPair {
  std::size_t id = 0;
  std::string image_id;
  std::size_t source = 0;
  std::optional<std::size_t> target;  // absent for untargeted pairs
  SamplerSeed seed;

  bool operator==(const EvalPair&) const = default;
};

using ImageLoader = std::function<Image(const std::string&)>;

class ShortfallError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct EvalSet {
  std::vector<EvalPair> pairs;
  std::size_t images_requested = 0;
  std::size_t images_selected = 0;
  std::vector<std::string> misclassified;  // skipped image ids
  std::size_t bookkeeping_queries = 0;     // outside every attack budget
  std::string shortfall;                   // empty when enough images were found
};

struct EvalSetOptions {
  std::size_t num_images = 1;
  std::size_t targets_per_image = 1;  // 0 builds untargeted pairs
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;
  bool allow_shortfall = false;
};

/// Picks correctly classified images evenly across classes and pairs each with
/// distinct random non-source targets. Every candidate image costs one
/// bookkeeping query on `bookkeeping`.
inline EvalSet build_eval_set(const std::vector<ManifestEntry>& manifest, const ImageLoader& load,
                              ScoreOracle& bookkeeping, const EvalSetOptions& opt) {
  if (opt.targets_per_image + 1 > opt.num_classes)
    throw ConfigError("targets_per_image " + std::to_string(opt.targets_per_image) + " needs more than " +
                      std::to_string(opt.num_classes) + " classes");
  Engine rng = make_engine({opt.seed, 0x65766131ULL});

  std::map<std::size_t, std::vector<const ManifestEntry*>> by_class;
  for (const auto& e : manifest) {
    if (e.label >= opt.num_classes)
      throw ConfigError("manifest label " + std::to_string(e.label) + " for " + e.file + " is out of range");
    by_class[e.label].push_back(&e);
  }
  std::vector<std::vector<const ManifestEntry*>> queues;
  for (auto& [label, entries] : by_class) {
    std::shuffle(entries.begin(), entries.end(), rng);
    queues.push_back(entries);
  }
  std::shuffle(queues.begin(), queues.end(), rng);

  EvalSet set;
  set.images_requested = opt.num_images;
  const std::size_t used_before = bookkeeping.used();
  std::vector<std::size_t> cursor(queues.size(), 0);
  bool progressed = true;
  while (set.images_selected < opt.num_images && progressed) {
    progressed = false;
    for (std::size_t q = 0; q < queues.size() && set.images_selected < opt.num_images; ++q) {
      if (cursor[q] >= queues[q].size()) continue;
      const ManifestEntry& e = *queues[q][cursor[q]++];
      progressed = true;
      const ClassId clean = predicted_label(bookkeeping.query(load(e.file)));
      if (clean != ClassId{e.label}) {
        set.misclassified.push_back(e.file);
        continue;
      }
      ++set.images_selected;
      if (opt.targets_per_image == 0) {
        set.pairs.push_back({set.pairs.size(), e.file, e.label, std::nullopt, {}});
        continue;
      }
      std::vector<std::size_t> others;
      for (std::size_t c = 0; c < opt.num_classes; ++c)
        if (c != e.label) others.push_back(c);
      std::shuffle(others.begin(), others.end(), rng);
      for (std::size_t k = 0; k < opt.targets_per_image; ++k)
        set.pairs.push_back({set.pairs.size(), e.file, e.label, others[k], {}});
    }
  }
  set.bookkeeping_queries = bookkeeping.used() - used_before;
  for (auto& p : set.pairs) p.seed = derive(SamplerSeed{opt.seed, 0}, p.id);

  if (set.images_selected < opt.num_images) {
    set.shortfall = "found " + std::to_string(set.images_selected) + " correctly classified images of " +
                    std::to_string(opt.num_images) + " requested (" + std::to_string(set.misclassified.size()) +
                    " misclassified, " + std::to_string(manifest.size()) + " in manifest)";
    if (!opt.allow_shortfall) throw ShortfallError(set.shortfall);
  }
  return set;
}

struct PairOutcome {
  EvalPair pair;
  std::optional<AttackResult> result;
  std::string failure;  // set when the attack aborted or threw

  bool succeeded_within(double queries, double sparsity_threshold) const {
    return result && result->success && static_cast<double>(result->queries_used) <= queries &&
           result->achieved_sparsity <= sparsity_threshold + 1e-12;
  }
};

struct EvalReport {
  std::vector<double> query_grid;
  std::vector<double> sparsity_grid;
  std::vector<PairOutcome> outcomes;
  std::vector<std::vector<double>> asr;  // [query budget][sparsity threshold]
  std::optional<double> accuracy_under_attack;
  std::vector<std::vector<double>> accuracy_grid;  // untargeted pairs only
  std::optional<double> median_queries;             // over successful attacks
  std::optional<double> mean_queries;
  std::size_t bookkeeping_queries = 0;
};

struct EvalOptions {
  std::vector<double> query_grid{2000, 4000, 6000, 8000, 10000};
  std::vector<double> sparsity_grid{0.004, 0.006, 0.008, 0.010};
  std::size_t workers = 1;
};

/// Fresh oracle per pair; its budget is the attack's budget.
using OracleFactory = std::function<ScoreOracle(const EvalPair&)>;

namespace detail {

inline std::vector<std::vector<double>> success_grid(const std::vector<const PairOutcome*>& outcomes,
                                                     const std::vector<double>& queries,
                                                     const std::vector<double>& thresholds) {
  std::vector<std::vector<double>> grid(queries.size(), std::vector<double>(thresholds.size(), 0.0));
  if (outcomes.empty()) return grid;
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t j = 0; j < thresholds.size(); ++j) {
      std::size_t hits = 0;
      for (const auto* o : outcomes) hits += o->succeeded_within(queries[i], thresholds[j]) ? 1 : 0;
      grid[i][j] = static_cast<double>(hits) / static_cast<double>(outcomes.size());
    }
  return grid;
}

inline void check_monotone(const std::vector<double>& queries, const std::vector<double>& thresholds,
                           const std::vector<std::vector<double>>& asr) {
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t j = 0; j < thresholds.size(); ++j)
      for (std::size_t i2 = 0; i2 < queries.size(); ++i2)
        for (std::size_t j2 = 0; j2 < thresholds.size(); ++j2)
          if (queries[i2] >= queries[i] && thresholds[j2] >= thresholds[j] && asr[i2][j2] < asr[i][j])
            throw InvariantError("ASR grid is not monotone in budget and sparsity threshold");
}

}  // namespace detail

/// Rebuilds the grids and aggregate statistics from `report.outcomes`.
inline void summarize(EvalReport& report) {
  std::vector<const PairOutcome*> all;
  std::vector<const PairOutcome*> untargeted;
  std::vector<double> queries;
  for (const auto& o : report.outcomes) {
    all.push_back(&o);
    if (!o.pair.target) untargeted.push_back(&o);
    if (o.result && o.result->success) queries.push_back(static_cast<double>(o.result->queries_used));
  }
  report.asr = detail::success_grid(all, report.query_grid, report.sparsity_grid);
  detail::check_monotone(report.query_grid, report.sparsity_grid, report.asr);
  report.accuracy_grid.clear();
  report.accuracy_under_attack.reset();
  if (!untargeted.empty()) {
    report.accuracy_grid = detail::success_grid(untargeted, report.query_grid, report.sparsity_grid);
    for (auto& row : report.accuracy_grid)
      for (double& v : row) v = 1.0 - v;
    std::size_t broken = 0;
    for (const auto* o : untargeted) broken += (o->result && o->result->success) ? 1 : 0;
    report.accuracy_under_attack = 1.0 - static_cast<double>(broken) / static_cast<double>(untargeted.size());
  }
  report.median_queries.reset();
  report.mean_queries.reset();
  if (!queries.empty()) {
    std::sort(queries.begin(), queries.end());
    const std::size_t n = queries.size();
    report.median_queries = n % 2 ? queries[n / 2] : 0.5 * (queries[n / 2 - 1] + queries[n / 2]);
    report.mean_queries = std::accumulate(queries.begin(), queries.end(), 0.0) / static_cast<double>(n);
  }
}

inline LossSpec loss_spec_for(const EvalPair& pair) {
  LossSpec spec;
  spec.source_class = pair.source;
  if (pair.target) {
    spec.mode = LossMode::targeted_cross_entropy;
    spec.target_class = *pair.target;
  } else {
    spec.mode = LossMode::untargeted_margin;
  }
  return spec;
}

/// One attack per pair on a worker pool. An attack that throws or aborts is
/// recorded as a failure with its cause; other pairs are unaffected.
inline EvalReport evaluate(const std::vector<EvalPair>& pairs, const AttackConfig& cfg, const OracleFactory& oracles,
                           const ImageLoader& load, const EvalOptions& opt) {
  EvalReport report;
  report.query_grid = opt.query_grid;
  report.sparsity_grid = opt.sparsity_grid;
  report.outcomes.resize(pairs.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next.fetch_add(1); i < pairs.size(); i = next.fetch_add(1)) {
      PairOutcome& out = report.outcomes[i];
      out.pair = pairs[i];
      try {
        AttackConfig pair_cfg = cfg;
        pair_cfg.seed = pairs[i].seed;
        ScoreOracle oracle = oracles(pairs[i]);
        AttackHooks hooks;
        hooks.clean_prediction = ClassId{pairs[i].source};
        out.result = run_attack(load(pairs[i].image_id), loss_spec_for(pairs[i]), pair_cfg, oracle, hooks);
        if (out.result->termination == Termination::oracle_failure ||
            out.result->termination == Termination::oracle_budget)
          out.failure = out.result->error;
      } catch (const std::exception& e) {
        out.result.reset();
        out.failure = e.what();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(opt.workers, pairs.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  summarize(report);
  return report;
}

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& o : r.outcomes) {
    nlohmann::json p{{"id", o.pair.id},
                     {"image", o.pair.image_id},
                     {"source", o.pair.source},
                     {"target", o.pair.target ? nlohmann::json(*o.pair.target) : nlohmann::json(nullptr)},
                     {"seed", o.pair.seed.seed},
                     {"stream", o.pair.seed.stream}};
    p["result"] = o.result ? result_to_json(*o.result) : nlohmann::json(nullptr);
    if (!o.failure.empty()) p["failure"] = o.failure;
    pairs.push_back(std::move(p));
  }
  return {{"query_grid", r.query_grid},
          {"sparsity_grid", r.sparsity_grid},
          {"asr", r.asr},
          {"accuracy_under_attack", detail::optional_number(r.accuracy_under_attack)},
          {"accuracy_grid", r.accuracy_grid},
          {"median_queries", detail::optional_number(r.median_queries)},
          {"mean_queries", detail::optional_number(r.mean_queries)},
          {"bookkeeping_queries", r.bookkeeping_queries},
          {"pairs", pairs}};
}

/// CSV grid: one row per query budget, one column per sparsity threshold.
inline std::string asr_csv(const EvalReport& r) {
  std::string out = "queries";
  for (double s : r.sparsity_grid) out += ",s=" + detail::format_number(s);
  out += "\n";
  for (std::size_t i = 0; i < r.query_grid.size(); ++i) {
    out += detail::format_number(r.query_grid[i]);
    for (std::size_t j = 0; j < r.sparsity_grid.size(); ++j)
      out += "," + detail::format_number(r.asr.empty() ? 0.0 : r.asr[i][j]);
    out += "\n";
  }
  return out;
}

inline std::string traces_csv(const EvalReport& r) {
  std::string out = "pair,query,loss\n";
  for (const auto& o : r.outcomes) {
    if (!o.result) continue;
    for (const auto& p : o.result->loss_trace)
      out += std::to_string(o.pair.id) + "," + std::to_string(p.query) + "," + detail::format_number(p.loss) + "\n";
  }
  return out;
}

/// Writes report.json, asr.csv and traces.csv into `dir` (created if needed).
inline std::vector<std::filesystem::path> export_results(const EvalReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const std::vector<std::filesystem::path> files{dir / "report.json", dir / "asr.csv", dir / "traces.csv"};
  detail::write_text(files[0], report_to_json(report).dump(2) + "\n");
  detail::write_text(files[1], asr_csv(report));
  detail::write_text(files[2], traces_csv(report));
  return files;
}

}  // namespace sparsemask
