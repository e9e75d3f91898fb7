#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sparsemask/attack.hpp"
#include "sparsemask/bayes.hpp"
#include "sparsemask/config.hpp"
#include "sparsemask/harness.hpp"
#include "sparsemask/image_io.hpp"
#include "sparsemask/oracle.hpp"
#include "sparsemask/remote.hpp"
#include "sparsemask/synth.hpp"

namespace sparsemask::cli {

enum ExitCode : int { kOk = 0, kAttackFailed = 1, kUsage = 2, kTransport = 3 };

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k = attack_config_keys();
    k.insert({"loss", "classes", "toy_seed", "toy_weight_scale", "oracle", "rnd_sigma", "bearer_token", "base64",
              "shape", "num_images", "targets_per_image", "query_grid", "sparsity_grid", "workers"});
    return k;
  }();
  return keys;
}

struct Options {
  std::string config;
  std::string image;
  std::string target;
  std::string dataset;
  std::string out;
  std::string oracle;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<double> rnd_sigma;
};

/// Config file values with command-line flags layered on top.
struct Settings {
  KeyValueConfig kv;
  AttackConfig attack;
  std::string oracle = "toy";
  double rnd_sigma = 0.0;
  std::size_t workers = 1;
};

inline Settings resolve(const Options& o) {
  Settings s;
  if (!o.config.empty()) s.kv = KeyValueConfig::load(o.config);
  s.kv.require_known(config_keys());
  s.attack = apply_attack_config(s.kv);
  if (o.seed) s.attack.seed.seed = *o.seed;
  if (s.kv.has("oracle")) s.oracle = s.kv.text("oracle");
  if (!o.oracle.empty()) s.oracle = o.oracle;
  if (s.kv.has("rnd_sigma")) s.rnd_sigma = s.kv.number("rnd_sigma");
  if (o.rnd_sigma) s.rnd_sigma = *o.rnd_sigma;
  if (s.kv.has("workers")) s.workers = s.kv.count("workers");
  if (o.workers) s.workers = *o.workers;
  if (s.rnd_sigma < 0.0) throw ConfigError("rnd-sigma must be >= 0");
  return s;
}

/// toy | model:<path> | http:<url>, optionally behind the random-noise defense.
inline std::shared_ptr<const ScoreModel> make_model(const Settings& s, const Shape& shape) {
  std::shared_ptr<const ScoreModel> model;
  const std::string& spec = s.oracle;
  if (spec == "toy") {
    const std::size_t classes = s.kv.has("classes") ? s.kv.count("classes") : 10;
    const std::uint64_t toy_seed = s.kv.has("toy_seed") ? s.kv.count("toy_seed") : 0;
    const double scale = s.kv.has("toy_weight_scale") ? s.kv.number("toy_weight_scale")
                                                       : 4.0 / std::sqrt(static_cast<double>(shape.size()));
    model = std::make_shared<LinearSoftmaxModel>(LinearSoftmaxModel::random(shape, classes, {toy_seed, 0}, scale));
  } else if (spec.rfind("model:", 0) == 0) {
    model = std::make_shared<DenseNetworkModel>(DenseNetworkModel::load(spec.substr(6)));
  } else if (spec.rfind("http:", 0) == 0) {
    const std::string token = s.kv.has("bearer_token") ? s.kv.text("bearer_token") : "";
    const bool base64 = s.kv.has("base64") && s.kv.flag("base64");
    model = std::make_shared<RemoteModel>(RemoteModel::connect(spec.substr(5), {}, token, base64));
  } else {
    throw ConfigError("unknown oracle '" + spec + "' (expected toy, model:<path> or http:<url>)");
  }
  if (s.rnd_sigma > 0.0)
    model = std::make_shared<RndModel>(model, s.rnd_sigma, derive(s.attack.seed, "rnd"));
  return model;
}

inline Shape shape_from_config(const KeyValueConfig& kv) {
  if (!kv.has("shape")) throw ConfigError("gen-synth needs --image or a 'shape = [c, w, h]' config key");
  const auto dims = kv.numbers("shape");
  if (dims.size() != 3) throw ConfigError("'shape' must be [c, w, h]");
  return {static_cast<std::uint32_t>(dims[0]), static_cast<std::uint32_t>(dims[1]), static_cast<std::uint32_t>(dims[2])};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  detail::write_text(p, j.dump(2) + "\n");
}

/// Loss spec for a single-image run. Without --target the attack is untargeted
/// against the clean prediction; partial-score oracles use partial-margin.
inline LossSpec single_image_spec(const Settings& s, const Options& o, const ScoreVector& clean) {
  LossSpec spec;
  const ClassId clean_label = predicted_label(clean);
  spec.source_class = clean_label;
  if (s.kv.has("loss")) {
    spec.mode = parse_loss_mode(s.kv.text("loss"));
  } else if (clean.is_partial()) {
    spec.mode = LossMode::partial_margin;
  } else {
    spec.mode = o.target.empty() ? LossMode::untargeted_margin : LossMode::targeted_cross_entropy;
  }
  if (spec.mode != LossMode::untargeted_margin) {
    if (o.target.empty()) throw ConfigError("targeted loss needs --target");
    if (spec.mode == LossMode::partial_margin) {
      spec.target_class = o.target;
    } else {
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(o.target.data(), o.target.data() + o.target.size(), idx);
      if (ec != std::errc() || ptr != o.target.data() + o.target.size())
        throw ConfigError("--target must be a class index for full-score oracles");
      spec.target_class = idx;
    }
  }
  spec.validate();
  return spec;
}

struct SingleRun {
  AttackResult result;
  std::optional<BeliefState> belief;
  LossSpec spec;
  std::size_t bookkeeping_queries = 0;
};

inline SingleRun run_single(const Settings& s, const Options& o) {
  const Image x = read_image(o.image);
  auto model = make_model(s, x.shape());
  ScoreOracle bookkeeping(model, 1);
  const ScoreVector clean = bookkeeping.query(x);
  SingleRun run;
  run.bookkeeping_queries = bookkeeping.used();
  run.spec = single_image_spec(s, o, clean);
  if (s.attack.budget > x.shape().pixels()) throw ConfigError("budget exceeds image pixel count");
  ScoreOracle oracle(model, s.attack.query_limit);
  AttackHooks hooks;
  hooks.clean_prediction = predicted_label(clean);
  hooks.on_belief = [&](const BeliefState& b) { run.belief = b; };
  run.result = run_attack(x, run.spec, s.attack, oracle, hooks);
  return run;
}

inline int exit_code_for(const AttackResult& r) {
  if (r.success) return kOk;
  return r.termination == Termination::oracle_failure ? kTransport : kAttackFailed;
}

inline nlohmann::json single_run_json(const SingleRun& run) {
  nlohmann::json j = result_to_json(run.result);
  j["loss_mode"] = to_string(run.spec.mode);
  j["source_class"] = run.spec.source_class ? class_to_json(*run.spec.source_class) : nlohmann::json(nullptr);
  j["target_class"] = run.spec.target_class ? class_to_json(*run.spec.target_class) : nlohmann::json(nullptr);
  j["bookkeeping_queries"] = run.bookkeeping_queries;
  return j;
}

inline int cmd_attack(const Options& o, std::ostream& out) {
  const Settings s = resolve(o);
  const SingleRun run = run_single(s, o);
  write_json(o.out, single_run_json(run));
  out << (run.result.success ? "success" : "failure") << " after " << run.result.queries_used << " queries ("
      << to_string(run.result.termination) << "), sparsity " << run.result.achieved_sparsity << "\n";
  return exit_code_for(run.result);
}

inline int cmd_inspect_belief(const Options& o, std::ostream& out) {
  const Settings s = resolve(o);
  const SingleRun run = run_single(s, o);
  nlohmann::json j;
  j["result"] = single_run_json(run);
  j["belief"] = run.belief ? belief_to_json(*run.belief) : nlohmann::json(nullptr);
  write_json(o.out, j);
  out << "belief state written to " << o.out << "\n";
  return exit_code_for(run.result);
}

inline int cmd_gen_synth(const Options& o, std::ostream& out) {
  const Settings s = resolve(o);
  std::optional<Image> source;
  if (!o.image.empty()) source = read_image(o.image);
  const Shape shape = source ? source->shape() : shape_from_config(s.kv);
  const Image syn = generate_synthetic(shape, s.attack.synth, derive(s.attack.seed, "synth"),
                                       source ? &*source : nullptr);
  const std::filesystem::path p(o.out);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  write_image(p, syn);
  out << to_string(s.attack.synth.kind) << " " << to_string(shape) << " image written to " << o.out << "\n";
  return kOk;
}

inline int cmd_serve_check(const Options& o, std::ostream& out) {
  const Settings s = resolve(o);
  if (s.oracle.rfind("http:", 0) != 0) throw ConfigError("serve-check needs --oracle http:<url>");
  auto remote = RemoteModel::connect(s.oracle.substr(5));
  const Shape shape = remote.input_shape();
  const Image probe = generate_synthetic(shape, SynthScheme{SynthKind::uniform_continuous}, s.attack.seed);
  const ScoreVector scores = remote.evaluate(probe);
  nlohmann::json j{{"meta", remote.fetch_meta()}, {"probe", wire::encode_scores(scores)}};
  j["probe_prediction"] = class_to_json(predicted_label(scores));
  if (o.out.empty())
    out << j.dump(2) << "\n";
  else
    write_json(o.out, j);
  return kOk;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  const Settings s = resolve(o);
  const std::filesystem::path dir(o.dataset);
  const auto manifest = read_manifest(dir);
  if (manifest.empty()) throw ConfigError("dataset manifest is empty");
  const ImageLoader load = [dir](const std::string& file) { return read_image(dir / file); };
  const Image first = load(manifest.front().file);
  auto model = make_model(s, first.shape());

  EvalSetOptions set_opt;
  set_opt.num_images = s.kv.has("num_images") ? s.kv.count("num_images") : manifest.size();
  set_opt.targets_per_image = s.kv.has("targets_per_image") ? s.kv.count("targets_per_image") : 1;
  set_opt.num_classes = s.kv.has("classes") ? s.kv.count("classes") : model->classes();
  set_opt.seed = s.attack.seed.seed;
  set_opt.allow_shortfall = true;
  ScoreOracle bookkeeping(model, manifest.size());
  const EvalSet set = build_eval_set(manifest, load, bookkeeping, set_opt);
  if (!set.shortfall.empty()) out << "warning: " << set.shortfall << "\n";

  EvalOptions eval_opt;
  if (s.kv.has("query_grid")) eval_opt.query_grid = s.kv.numbers("query_grid");
  if (s.kv.has("sparsity_grid")) eval_opt.sparsity_grid = s.kv.numbers("sparsity_grid");
  eval_opt.workers = s.workers;
  const OracleFactory factory = [&](const EvalPair&) { return ScoreOracle(model, s.attack.query_limit); };
  EvalReport report = evaluate(set.pairs, s.attack, factory, load, eval_opt);
  report.bookkeeping_queries = set.bookkeeping_queries;
  export_results(report, o.out);
  out << set.pairs.size() << " pairs evaluated, results in " << o.out << "\n";
  return kOk;
}

/// Runs one command line; returns the process exit code.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Sparse black-box attack over pixel-selection masks"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "flat key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "master seed (overrides config)");
    cmd->add_option("--oracle", o.oracle, "toy | model:<path> | http:<url>");
    cmd->add_option("--rnd-sigma", o.rnd_sigma, "random-noise defense stddev on the victim");
  };

  auto* attack = app.add_subcommand("attack", "attack a single image");
  add_common(attack);
  attack->add_option("--image", o.image, "source image (.png or raw float container)")->required();
  attack->add_option("--target", o.target, "target class (untargeted when omitted)");
  attack->add_option("--out", o.out, "result JSON")->required();

  auto* eval = app.add_subcommand("eval", "sweep a dataset and report ASR grids");
  add_common(eval);
  eval->add_option("--dataset", o.dataset, "directory with images and manifest.json")->required();
  eval->add_option("--out", o.out, "output directory")->required();
  eval->add_option("--workers", o.workers, "parallel attacks");

  auto* gen = app.add_subcommand("gen-synth", "emit a synthetic color image");
  add_common(gen);
  gen->add_option("--image", o.image, "source image (for shape and inverted-frequency)");
  gen->add_option("--out", o.out, "output image (.png or raw)")->required();

  auto* inspect = app.add_subcommand("inspect-belief", "attack one image and dump the final belief state");
  add_common(inspect);
  inspect->add_option("--image", o.image, "source image")->required();
  inspect->add_option("--target", o.target, "target class (untargeted when omitted)");
  inspect->add_option("--out", o.out, "belief JSON")->required();

  auto* check = app.add_subcommand("serve-check", "probe a remote scoring endpoint");
  add_common(check);
  check->add_option("--out", o.out, "probe report JSON (stdout when omitted)");

  std::vector<const char*> argv{"sparsemask"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (attack->parsed()) return cmd_attack(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (gen->parsed()) return cmd_gen_synth(o, out);
    if (inspect->parsed()) return cmd_inspect_belief(o, out);
    if (check->parsed()) return cmd_serve_check(o, out);
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << "\n";
    return kTransport;
  } catch (const ProtocolError& e) {
    err << "protocol error: " << e.what() << "\n";
    return kTransport;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace sparsemask::cli
