// attnkit: one binary for the whole workflow. Subcommands:
//   gen       write train/heldout/stress splits as jsonl
//   train     fit a model on a generated split, save a checkpoint
//   infer     run a checkpoint free-running on tokens or a stored case
//   diagnose  alignment metrics + error classification for one alignment
//   oracle    cross-check soft alignment kernels against exact enumeration
//   stress    run checkpoints over the stress split and compare failure rates
//
// Everything behavioral lives in a JSON run config; flags carry only paths
// and seed overrides. Outputs land under --out and nothing else is touched.
// No artifact embeds a timestamp, so rerunning a command with the same
// inputs reproduces every file byte for byte.
//
// Exit codes: 0 ok, 1 bad usage/config/missing input, 2 runtime failure,
// 3 the command ran but its acceptance check failed (oracle, stress).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnkit/diagnostics.hpp"
#include "attnkit/io.hpp"
#include "attnkit/kernels.hpp"
#include "attnkit/oracle.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/toy/dataset.hpp"
#include "attnkit/toy/infer.hpp"
#include "attnkit/toy/model.hpp"
#include "attnkit/toy/train.hpp"
#include "attnkit/types.hpp"

namespace fs = std::filesystem;
using attnkit::io::json;
using namespace attnkit;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& field) {
  if (obj.contains(key)) {
    try {
      field = obj.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

struct StressEntry {
  std::string checkpoint;
  std::string infer_mode = "hard_greedy";
  std::string label;
};

struct RunConfig {
  json echo = json::object();  // exactly what the config file contained
  uint64_t seed = 0;
  std::string out;
  toy::ToyTaskSpec task;
  std::string mechanism = "sma";
  json model_overrides = json::object();
  toy::TrainConfig train;
  bool clip_set = false;
  toy::InferConfig infer;
  diag::ErrorThresholds thresholds;
  std::vector<StressEntry> stress_entries;
};

void validate_label(const std::string& label) {
  if (label.empty()) throw ConfigError("stress entry label must not be empty");
  for (char c : label) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '-';
    if (!ok) throw ConfigError("stress entry label '" + label + "' has characters outside [A-Za-z0-9_-]");
  }
}

RunConfig parse_run_config(const json& j) {
  RunConfig rc;
  rc.echo = j;
  check_keys(j, "config", {"seed", "out", "task", "mechanism", "model", "train", "infer",
                           "thresholds", "stress"});
  maybe(j, "seed", rc.seed);
  maybe(j, "out", rc.out);

  if (j.contains("task")) {
    const json& t = j.at("task");
    check_keys(t, "task", {"vocab", "min_train_len", "max_train_len", "min_stress_len",
                           "max_stress_len", "train_count", "heldout_count", "stress_count",
                           "jitter_prob", "punct_rate"});
    maybe(t, "vocab", rc.task.vocab);
    maybe(t, "min_train_len", rc.task.min_train_len);
    maybe(t, "max_train_len", rc.task.max_train_len);
    maybe(t, "min_stress_len", rc.task.min_stress_len);
    maybe(t, "max_stress_len", rc.task.max_stress_len);
    maybe(t, "train_count", rc.task.train_count);
    maybe(t, "heldout_count", rc.task.heldout_count);
    maybe(t, "stress_count", rc.task.stress_count);
    maybe(t, "jitter_prob", rc.task.jitter_prob);
    maybe(t, "punct_rate", rc.task.punct_rate);
    if (rc.task.vocab < 1) throw ConfigError("task.vocab must be at least 1");
    if (rc.task.min_train_len < 1 || rc.task.min_train_len > rc.task.max_train_len)
      throw ConfigError("task train length range is inverted or empty");
    if (rc.task.min_stress_len < 1 || rc.task.min_stress_len > rc.task.max_stress_len)
      throw ConfigError("task stress length range is inverted or empty");
    if (rc.task.train_count < 1 || rc.task.heldout_count < 1 || rc.task.stress_count < 1)
      throw ConfigError("task split counts must be positive");
    if (rc.task.jitter_prob < 0.0 || rc.task.jitter_prob > 1.0)
      throw ConfigError("task.jitter_prob must lie in [0, 1]");
    if (rc.task.punct_rate < 0.0 || rc.task.punct_rate > 1.0)
      throw ConfigError("task.punct_rate must lie in [0, 1]");
  }

  if (j.contains("mechanism")) {
    rc.mechanism = j.at("mechanism").get<std::string>();
    try {
      toy::mechanism_from_name(rc.mechanism);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"emb_dim", "enc_hidden", "dec_hidden", "attn_dim", "loc_filters",
                            "loc_width", "gmm_components", "init_bias", "noise_scale",
                            "pos_loss_weight", "sma_edge", "gmm_normalize"});
    if (m.contains("sma_edge")) {
      std::string edge = m.at("sma_edge").get<std::string>();
      if (edge != "clamp" && edge != "leak")
        throw ConfigError("model.sma_edge must be 'clamp' or 'leak'");
    }
    rc.model_overrides = m;
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train", {"steps", "batch_size", "lr", "beta1", "beta2", "adam_eps",
                            "clip_norm", "warmup_steps", "final_lr_frac", "log_every"});
    maybe(t, "steps", rc.train.steps);
    maybe(t, "batch_size", rc.train.batch_size);
    maybe(t, "lr", rc.train.lr);
    maybe(t, "beta1", rc.train.beta1);
    maybe(t, "beta2", rc.train.beta2);
    maybe(t, "adam_eps", rc.train.adam_eps);
    if (t.contains("clip_norm")) {
      rc.train.clip_norm = t.at("clip_norm").get<double>();
      rc.clip_set = true;
    }
    maybe(t, "warmup_steps", rc.train.warmup_steps);
    maybe(t, "final_lr_frac", rc.train.final_lr_frac);
    maybe(t, "log_every", rc.train.log_every);
    if (rc.train.steps < 1 || rc.train.batch_size < 1)
      throw ConfigError("train.steps and train.batch_size must be positive");
    if (rc.train.lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (rc.train.warmup_steps < 0) throw ConfigError("train.warmup_steps must not be negative");
    if (rc.train.final_lr_frac <= 0.0 || rc.train.final_lr_frac > 1.0)
      throw ConfigError("train.final_lr_frac must lie in (0, 1]");
  }

  if (j.contains("infer")) {
    const json& f = j.at("infer");
    check_keys(f, "infer", {"mode", "max_frames", "stop_threshold", "quantize_feedback"});
    if (f.contains("mode")) {
      try {
        rc.infer.mode = toy::infer_mode_from_name(f.at("mode").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
    maybe(f, "max_frames", rc.infer.max_frames);
    maybe(f, "stop_threshold", rc.infer.stop_threshold);
    maybe(f, "quantize_feedback", rc.infer.quantize_feedback);
    if (rc.infer.max_frames < 1) throw ConfigError("infer.max_frames must be positive");
    if (rc.infer.stop_threshold <= 0.0 || rc.infer.stop_threshold >= 1.0)
      throw ConfigError("infer.stop_threshold must lie in (0, 1)");
  }

  if (j.contains("thresholds")) {
    const json& t = j.at("thresholds");
    check_keys(t, "thresholds", {"locality_floor", "collapse_run", "coverage_floor"});
    maybe(t, "locality_floor", rc.thresholds.locality_floor);
    maybe(t, "collapse_run", rc.thresholds.collapse_run);
    maybe(t, "coverage_floor", rc.thresholds.coverage_floor);
    if (rc.thresholds.locality_floor <= 0.0 || rc.thresholds.locality_floor > 1.0)
      throw ConfigError("thresholds.locality_floor must lie in (0, 1]");
    if (rc.thresholds.collapse_run < 1) throw ConfigError("thresholds.collapse_run must be positive");
    if (rc.thresholds.coverage_floor < 0.0)
      throw ConfigError("thresholds.coverage_floor must not be negative");
  }

  if (j.contains("stress")) {
    const json& s = j.at("stress");
    check_keys(s, "stress", {"entries"});
    if (!s.contains("entries") || !s.at("entries").is_array())
      throw ConfigError("stress.entries must be an array");
    std::vector<std::string> labels;
    int idx = 0;
    for (const json& e : s.at("entries")) {
      check_keys(e, "stress entry", {"checkpoint", "infer_mode", "label"});
      StressEntry entry;
      if (!e.contains("checkpoint")) throw ConfigError("stress entry needs a checkpoint path");
      entry.checkpoint = e.at("checkpoint").get<std::string>();
      maybe(e, "infer_mode", entry.infer_mode);
      try {
        toy::infer_mode_from_name(entry.infer_mode);
      } catch (const std::exception& ex) {
        throw ConfigError(ex.what());
      }
      entry.label = "entry" + std::to_string(idx);
      maybe(e, "label", entry.label);
      validate_label(entry.label);
      if (std::find(labels.begin(), labels.end(), entry.label) != labels.end())
        throw ConfigError("duplicate stress entry label '" + entry.label + "'");
      labels.push_back(entry.label);
      rc.stress_entries.push_back(std::move(entry));
      ++idx;
    }
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return parse_run_config(json::object());
  if (!fs::exists(path)) throw ConfigError("config not found: " + path);
  json j;
  try {
    j = io::read_json_file(path);
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

toy::ToyConfig build_model_config(const RunConfig& rc) {
  toy::Mechanism mech = toy::mechanism_from_name(rc.mechanism);
  toy::ToyConfig cfg = toy::default_config(mech, rc.task);
  const json& m = rc.model_overrides;
  maybe(m, "emb_dim", cfg.emb_dim);
  maybe(m, "enc_hidden", cfg.enc_hidden);
  maybe(m, "dec_hidden", cfg.dec_hidden);
  maybe(m, "attn_dim", cfg.attn_dim);
  maybe(m, "loc_filters", cfg.loc_filters);
  maybe(m, "loc_width", cfg.loc_width);
  maybe(m, "gmm_components", cfg.gmm_components);
  maybe(m, "init_bias", cfg.init_bias);
  maybe(m, "noise_scale", cfg.noise_scale);
  maybe(m, "pos_loss_weight", cfg.pos_loss_weight);
  if (m.contains("sma_edge"))
    cfg.sma_edge = m.at("sma_edge").get<std::string>() == "leak" ? EdgePolicy::Leak
                                                                 : EdgePolicy::Clamp;
  maybe(m, "gmm_normalize", cfg.gmm_normalize);
  if (cfg.emb_dim < 1 || cfg.enc_hidden < 1 || cfg.dec_hidden < 1 || cfg.attn_dim < 1)
    throw ConfigError("model dimensions must be positive");
  if (cfg.loc_filters < 1 || cfg.loc_width < 1 || cfg.loc_width % 2 == 0)
    throw ConfigError("model.loc_filters must be positive and loc_width odd");
  if (cfg.gmm_components < 1) throw ConfigError("model.gmm_components must be positive");
  if (cfg.pos_loss_weight < 0.0) throw ConfigError("model.pos_loss_weight must not be negative");
  return cfg;
}

std::string resolve_out(const std::string& flag_out, const RunConfig& rc) {
  std::string out = flag_out.empty() ? rc.out : flag_out;
  if (out.empty()) throw ConfigError("no output directory: pass --out or set \"out\" in the config");
  return out;
}

void write_manifest(const std::string& out, const char* command, const json& config_echo,
                    uint64_t seed, const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["config"] = config_echo;
  m["config_hash"] = io::config_hash_hex(config_echo);
  m["format_version"] = 1;
  m["outputs"] = outputs;
  m["seed"] = seed;
  io::write_json_file(out + "/manifest.json", m);
}

std::vector<int> parse_token_list(const std::string& text) {
  std::vector<int> tokens;
  std::string cell;
  std::stringstream ss(text);
  while (std::getline(ss, cell, ',')) {
    try {
      size_t used = 0;
      int v = std::stoi(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      tokens.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad token '" + cell + "' in --tokens (expect comma-separated integers)");
    }
  }
  if (tokens.empty()) throw ConfigError("--tokens parsed to an empty list");
  return tokens;
}

std::vector<toy::ToyCase> load_split(const std::string& data_dir, const std::string& split) {
  std::string path = data_dir + "/" + split + ".jsonl";
  if (!fs::exists(path)) throw ConfigError("split file not found: " + path);
  return toy::read_cases_jsonl(path);
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

int run_gen(const RunConfig& rc, const std::string& out_flag) {
  std::string out = resolve_out(out_flag, rc);
  std::vector<std::string> outputs;
  int counts[3] = {0, 0, 0};
  const char* splits[3] = {"train", "heldout", "stress"};
  for (int s = 0; s < 3; ++s) {
    auto cases = toy::generate_split(rc.task, splits[s], rc.seed);
    counts[s] = static_cast<int>(cases.size());
    toy::write_cases_jsonl(out + "/" + splits[s] + ".jsonl", cases);
    outputs.push_back(std::string(splits[s]) + ".jsonl");
  }
  write_manifest(out, "gen", rc.echo, rc.seed, outputs);
  std::printf("wrote %d train / %d heldout / %d stress cases under %s\n", counts[0], counts[1],
              counts[2], out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const RunConfig& rc, const std::string& data_dir, const std::string& out_flag) {
  std::string out = resolve_out(out_flag, rc);
  auto cases = load_split(data_dir, "train");
  if (cases.front().frames.cols != rc.task.frame_dim())
    throw ConfigError("data in " + data_dir + " has frame dim " +
                      std::to_string(cases.front().frames.cols) + " but the task expects " +
                      std::to_string(rc.task.frame_dim()));

  toy::ToyConfig cfg = build_model_config(rc);
  toy::ToyModel model = toy::init_model(cfg, rc.seed);
  toy::TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  if (!rc.clip_set) tc.clip_norm = toy::default_clip_norm(cfg.mechanism);

  toy::TrainResult r = toy::train(model, cases, tc);
  if (r.aborted) {
    std::fprintf(stderr, "training aborted after %d steps: non-finite loss or gradient\n",
                 r.steps_done);
    return 2;
  }

  std::vector<std::string> outputs;
  toy::save_checkpoint(out + "/checkpoint.json", model, rc.echo);
  outputs.push_back("checkpoint.json");

  std::string curve = "step,loss\n";
  for (size_t i = 0; i < r.loss_curve.size(); ++i) {
    curve += std::to_string(i + 1);
    curve += ',';
    curve += io::format_double(r.loss_curve[i]);
    curve += '\n';
  }
  io::write_text_file(out + "/loss_curve.csv", curve);
  outputs.push_back("loss_curve.csv");

  json summary;
  summary["mechanism"] = rc.mechanism;
  summary["steps"] = r.steps_done;
  summary["final_batch_loss"] = r.loss_curve.back();
  summary["train_loss"] = toy::evaluate_loss(model, cases);
  std::string held_path = data_dir + "/heldout.jsonl";
  if (fs::exists(held_path)) {
    auto held = toy::read_cases_jsonl(held_path);
    summary["heldout_loss"] = toy::evaluate_loss(model, held);
  }
  io::write_json_file(out + "/train_summary.json", summary);
  outputs.push_back("train_summary.json");

  write_manifest(out, "train", rc.echo, rc.seed, outputs);
  std::printf("trained %s for %d steps, final batch loss %.6f\n", rc.mechanism.c_str(),
              r.steps_done, r.loss_curve.back());
  return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

int run_infer(const RunConfig& rc, const std::string& ckpt_path, const std::string& out_flag,
              const std::string& tokens_flag, const std::string& data_dir,
              const std::string& split, int index) {
  std::string out = resolve_out(out_flag, rc);
  if (!fs::exists(ckpt_path)) {
    std::fprintf(stderr, "checkpoint not found: %s\n", ckpt_path.c_str());
    return 1;
  }
  toy::ToyModel model = toy::load_checkpoint(ckpt_path);

  const bool from_tokens = !tokens_flag.empty();
  const bool from_data = !data_dir.empty();
  if (from_tokens == from_data)
    throw ConfigError("infer needs exactly one input source: --tokens or --data/--split/--index");

  std::vector<int> tokens;
  std::optional<toy::ToyCase> target;
  if (from_tokens) {
    tokens = parse_token_list(tokens_flag);
    for (int t : tokens)
      if (t < 0 || t >= model.cfg.symbols)
        throw ConfigError("token " + std::to_string(t) + " outside the model's alphabet [0, " +
                          std::to_string(model.cfg.symbols) + ")");
  } else {
    auto cases = load_split(data_dir, split);
    if (index < 0 || index >= static_cast<int>(cases.size()))
      throw ConfigError("--index " + std::to_string(index) + " out of range for " + split +
                        " split of " + std::to_string(cases.size()) + " cases");
    target = cases[index];
    tokens = target->tokens;
  }

  toy::InferConfig ic = rc.infer;
  ic.seed = rc.seed;
  toy::InferResult res = toy::infer(model, tokens, ic);

  std::vector<std::string> outputs;
  if (res.frames.rows > 0) {
    io::write_matrix_csv(out + "/frames.csv", res.frames);
    outputs.push_back("frames.csv");
    io::write_matrix_csv(out + "/alignment.csv", res.alignments);
    outputs.push_back("alignment.csv");
  }
  if (ic.mode != toy::InferMode::Soft) {
    io::write_path_csv(out + "/path.csv", res.path);
    outputs.push_back("path.csv");
  }

  json summary;
  summary["mechanism"] = toy::mechanism_name(model.cfg.mechanism);
  summary["mode"] = toy::infer_mode_name(ic.mode);
  summary["tokens"] = tokens;
  summary["frames"] = res.frames.rows;
  summary["stopped"] = res.stopped;
  summary["past_end"] = res.past_end;
  if (target.has_value()) {
    toy::ToyTaskSpec acc_spec = rc.task;
    acc_spec.vocab = model.cfg.symbols - 2;
    summary["frame_accuracy"] = toy::frame_accuracy(res.frames, *target, acc_spec);
    summary["target_frames"] = target->frames.rows - 1;
  }
  io::write_json_file(out + "/infer_summary.json", summary);
  outputs.push_back("infer_summary.json");

  write_manifest(out, "infer", rc.echo, rc.seed, outputs);
  std::printf("%s inference: %d frames, stopped=%d, past_end=%d\n",
              toy::infer_mode_name(ic.mode), res.frames.rows, (int)res.stopped,
              (int)res.past_end);
  return 0;
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

json metrics_to_json(const diag::AlignmentMetrics& m) {
  json j;
  j["frames"] = m.frames;
  j["tokens"] = m.tokens;
  j["row_max"] = m.row_max;
  j["row_entropy"] = m.row_entropy;
  j["argmax_path"] = m.argmax_path;
  j["coverage"] = m.coverage;
  j["monotonicity_violations"] = m.monotonicity_violations;
  j["completeness_gaps"] = m.completeness_gaps;
  j["gap_floor"] = m.gap_floor;
  return j;
}

int run_diagnose(const RunConfig& rc, const std::string& alignment_path,
                 const std::string& out_flag, const std::string& tokens_flag) {
  std::string out = resolve_out(out_flag, rc);
  if (!fs::exists(alignment_path)) {
    std::fprintf(stderr, "alignment not found: %s\n", alignment_path.c_str());
    return 1;
  }
  Matrix align = io::read_matrix_csv(alignment_path);
  diag::AlignmentMetrics metrics = diag::compute_metrics(align, rc.thresholds.coverage_floor);

  std::vector<bool> exempt;
  if (!tokens_flag.empty()) {
    std::vector<int> tokens = parse_token_list(tokens_flag);
    if (static_cast<int>(tokens.size()) != align.cols)
      throw ConfigError("--tokens lists " + std::to_string(tokens.size()) +
                        " tokens but the alignment has " + std::to_string(align.cols) +
                        " columns");
    exempt = toy::zero_duration_mask(rc.task, tokens);
  }
  diag::ErrorClassification cls = diag::classify_errors(metrics, rc.thresholds, exempt);

  std::vector<std::string> outputs;
  io::write_json_file(out + "/metrics.json", metrics_to_json(metrics));
  outputs.push_back("metrics.json");

  json cj;
  cj["collapse_frames"] = cls.collapse_frames;
  cj["repeat_events"] = cls.repeat_events;
  cj["skip_events"] = cls.skip_events;
  cj["case_failed"] = cls.case_failed;
  cj["thresholds"]["locality_floor"] = rc.thresholds.locality_floor;
  cj["thresholds"]["collapse_run"] = rc.thresholds.collapse_run;
  cj["thresholds"]["coverage_floor"] = rc.thresholds.coverage_floor;
  io::write_json_file(out + "/classification.json", cj);
  outputs.push_back("classification.json");

  diag::render_alignment_heatmap(align, out + "/heatmap");
  outputs.push_back("heatmap.csv");
  outputs.push_back("heatmap.pgm");

  write_manifest(out, "diagnose", rc.echo, rc.seed, outputs);
  std::printf("classification: collapse=%d repeat=%d skip=%d failed=%d\n", cls.collapse_frames,
              cls.repeat_events, cls.skip_events, (int)cls.case_failed);
  return 0;
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

struct OracleOutcome {
  int passed = 0;
  double worst = 0.0;
};

int run_oracle(int instances, uint64_t seed, const std::string& family,
               const std::string& out_flag) {
  if (instances < 1) throw ConfigError("--random must be at least 1");
  if (family != "both" && family != "stepwise" && family != "monotonic")
    throw ConfigError("--family must be stepwise, monotonic, or both");
  const double tol = 1e-12;
  Rng rng(seed);
  OracleOutcome oc;

  auto random_p = [&](int T, int n) {
    Matrix p(T, n);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < n; ++j) p(i, j) = rng.uniform(1e-6, 1.0 - 1e-6);
    return p;
  };

  for (int inst = 0; inst < instances; ++inst) {
    double worst = 0.0;
    if (family != "monotonic") {
      const int T = static_cast<int>(rng.uniform_int(1, 10));
      const int n = static_cast<int>(rng.uniform_int(1, 10));
      Matrix p = random_p(T, n);
      for (EdgePolicy edge : {EdgePolicy::Clamp, EdgePolicy::Leak}) {
        oracle::ExactAlignment exact = oracle::enumerate_stepwise(p, edge);
        Vec prev = one_hot(n, 0);
        for (int i = 0; i < T; ++i) {
          prev = sma_alignment(prev, p.row(i), edge);
          for (int j = 0; j < n; ++j)
            worst = std::max(worst, std::fabs(prev[j] - exact.marginals(i, j)));
        }
      }
    }
    if (family != "stepwise") {
      const int T = static_cast<int>(rng.uniform_int(1, 8));
      const int n = static_cast<int>(rng.uniform_int(1, 8));
      Matrix p = random_p(T, n);
      oracle::ExactAlignment exact = oracle::enumerate_monotonic(p);
      Vec prev = one_hot(n, 0);
      for (int i = 0; i < T; ++i) {
        prev = ma_alignment_recursive(prev, p.row(i));
        for (int j = 0; j < n; ++j)
          worst = std::max(worst, std::fabs(prev[j] - exact.marginals(i, j)));
      }
    }
    oc.worst = std::max(oc.worst, worst);
    if (worst <= tol) ++oc.passed;
  }

  std::printf("%d/%d instances within 1e-12\n", oc.passed, instances);
  if (!out_flag.empty()) {
    json report;
    report["instances"] = instances;
    report["passed"] = oc.passed;
    report["max_abs_error"] = oc.worst;
    report["family"] = family;
    report["tolerance"] = tol;
    io::write_json_file(out_flag + "/oracle_report.json", report);
    json echo;
    echo["family"] = family;
    echo["random"] = instances;
    echo["seed"] = seed;
    write_manifest(out_flag, "oracle", echo, seed, {"oracle_report.json"});
  }
  return oc.passed == instances ? 0 : 3;
}

// ---------------------------------------------------------------------------
// stress
// ---------------------------------------------------------------------------

int run_stress(const RunConfig& rc, const std::string& data_dir, const std::string& out_flag) {
  std::string out = resolve_out(out_flag, rc);
  if (rc.stress_entries.empty())
    throw ConfigError("stress needs at least one entry under stress.entries");
  auto cases = load_split(data_dir, "stress");

  struct EntryReport {
    StressEntry entry;
    std::string mechanism;
    diag::CorpusReport report;
  };
  std::vector<EntryReport> reports;
  std::vector<std::string> outputs;

  for (size_t eidx = 0; eidx < rc.stress_entries.size(); ++eidx) {
    const StressEntry& entry = rc.stress_entries[eidx];
    if (!fs::exists(entry.checkpoint)) {
      std::fprintf(stderr, "checkpoint not found: %s\n", entry.checkpoint.c_str());
      return 1;
    }
    toy::ToyModel model = toy::load_checkpoint(entry.checkpoint);
    toy::InferMode mode = toy::infer_mode_from_name(entry.infer_mode);

    std::vector<diag::CaseResult> results;
    std::string case_csv = "case,failed,collapse_frames,repeat_events,skip_events,past_end,stopped,frame_accuracy\n";
    for (size_t k = 0; k < cases.size(); ++k) {
      toy::InferConfig ic = rc.infer;
      ic.mode = mode;
      ic.seed = rc.seed + 1000003ULL * eidx + k;
      toy::InferResult res = toy::infer(model, cases[k].tokens, ic);

      diag::ErrorClassification cls;
      if (res.frames.rows == 0) {
        cls.case_failed = true;  // nothing emitted at all
      } else {
        const int n = static_cast<int>(cases[k].tokens.size());
        diag::AlignmentMetrics m =
            mode != toy::InferMode::Soft && !res.path.empty()
                ? diag::compute_metrics(res.path, n, rc.thresholds.coverage_floor)
                : diag::compute_metrics(res.alignments, rc.thresholds.coverage_floor);
        cls = diag::classify_errors(m, rc.thresholds,
                                    toy::zero_duration_mask(rc.task, cases[k].tokens));
      }
      if (res.past_end || !res.stopped) cls.case_failed = true;
      double acc = toy::frame_accuracy(res.frames, cases[k], rc.task);

      case_csv += std::to_string(k) + ',' + std::to_string((int)cls.case_failed) + ',' +
                  std::to_string(cls.collapse_frames) + ',' + std::to_string(cls.repeat_events) +
                  ',' + std::to_string(cls.skip_events) + ',' + std::to_string((int)res.past_end) +
                  ',' + std::to_string((int)res.stopped) + ',' + io::format_double(acc) + '\n';
      results.push_back({std::to_string(k), cls});
    }

    std::string mech = toy::mechanism_name(model.cfg.mechanism);
    reports.push_back({entry, mech, diag::corpus_report(mech, std::move(results))});
    io::write_text_file(out + "/" + entry.label + "_cases.csv", case_csv);
    outputs.push_back(entry.label + "_cases.csv");
  }

  std::string table = "entry,mechanism,infer_mode,cases,failed_cases,failure_rate,collapse_frames,repeat_events,skip_events\n";
  for (const auto& er : reports) {
    table += er.entry.label + ',' + er.mechanism + ',' + er.entry.infer_mode + ',' +
             std::to_string(er.report.cases) + ',' + std::to_string(er.report.failed_cases) +
             ',' + io::format_double(er.report.failure_rate) + ',' +
             std::to_string(er.report.collapse_frames) + ',' +
             std::to_string(er.report.repeat_events) + ',' +
             std::to_string(er.report.skip_events) + '\n';
    std::printf("%-16s %-12s %-12s failure rate %.3f (%d/%d)\n", er.entry.label.c_str(),
                er.mechanism.c_str(), er.entry.infer_mode.c_str(), er.report.failure_rate,
                er.report.failed_cases, er.report.cases);
  }
  io::write_text_file(out + "/stress_report.csv", table);
  outputs.push_back("stress_report.csv");
  write_manifest(out, "stress", rc.echo, rc.seed, outputs);

  double best_sma = -1.0, best_other = -1.0;
  for (const auto& er : reports) {
    double rate = er.report.failure_rate;
    if (er.mechanism == "sma") {
      if (best_sma < 0.0 || rate < best_sma) best_sma = rate;
    } else {
      if (best_other < 0.0 || rate < best_other) best_other = rate;
    }
  }
  if (best_sma >= 0.0 && best_other >= 0.0) {
    if (best_sma > best_other) {
      std::printf("robustness gate FAILED: sma rate %.3f above best alternative %.3f\n", best_sma,
                  best_other);
      return 3;
    }
    std::printf("robustness gate passed: sma rate %.3f, best alternative %.3f\n", best_sma,
                best_other);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence attention workbench: synthetic data, training, inference, alignment forensics"};
  app.require_subcommand(1);

  std::string cfg_path, out_dir, data_dir, ckpt_path, tokens_flag, align_path;
  std::string split = "heldout", family = "both";
  int index = 0, random_n = 100;
  uint64_t seed_flag = 0;

  CLI::App* gen = app.add_subcommand("gen", "generate train/heldout/stress splits");
  gen->add_option("--config", cfg_path, "run config JSON");
  gen->add_option("--out", out_dir, "output directory");
  CLI::Option* gen_seed = gen->add_option("--seed", seed_flag, "override config seed");

  CLI::App* train = app.add_subcommand("train", "train a model on a generated split");
  train->add_option("--config", cfg_path, "run config JSON");
  train->add_option("--data", data_dir, "directory holding train.jsonl")->required();
  train->add_option("--out", out_dir, "output directory");
  CLI::Option* train_seed = train->add_option("--seed", seed_flag, "override config seed");

  CLI::App* infer = app.add_subcommand("infer", "free-running inference from a checkpoint");
  infer->add_option("--config", cfg_path, "run config JSON");
  infer->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  infer->add_option("--out", out_dir, "output directory");
  infer->add_option("--tokens", tokens_flag, "comma-separated token ids");
  infer->add_option("--data", data_dir, "directory holding split jsonl files");
  infer->add_option("--split", split, "split name when reading --data (default heldout)");
  infer->add_option("--index", index, "case index within the split");
  CLI::Option* infer_seed = infer->add_option("--seed", seed_flag, "override config seed");

  CLI::App* diagnose = app.add_subcommand("diagnose", "metrics and error classes for one alignment");
  diagnose->add_option("--config", cfg_path, "run config JSON");
  diagnose->add_option("--alignment", align_path, "alignment matrix CSV")->required();
  diagnose->add_option("--tokens", tokens_flag, "token ids for the zero-duration skip exemption");
  diagnose->add_option("--out", out_dir, "output directory");

  CLI::App* oracle_cmd = app.add_subcommand("oracle", "check soft kernels against exact enumeration");
  oracle_cmd->add_option("--random", random_n, "number of random instances (default 100)");
  oracle_cmd->add_option("--seed", seed_flag, "instance generator seed");
  oracle_cmd->add_option("--family", family, "stepwise, monotonic, or both (default both)");
  oracle_cmd->add_option("--out", out_dir, "optional report directory");

  CLI::App* stress = app.add_subcommand("stress", "compare checkpoints on the stress split");
  stress->add_option("--config", cfg_path, "run config JSON")->required();
  stress->add_option("--data", data_dir, "directory holding stress.jsonl")->required();
  stress->add_option("--out", out_dir, "output directory");
  CLI::Option* stress_seed = stress->add_option("--seed", seed_flag, "override config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (oracle_cmd->parsed()) return run_oracle(random_n, seed_flag, family, out_dir);

    RunConfig rc = load_run_config(cfg_path);
    if (gen->parsed()) {
      if (gen_seed->count()) rc.seed = seed_flag;
      return run_gen(rc, out_dir);
    }
    if (train->parsed()) {
      if (train_seed->count()) rc.seed = seed_flag;
      return run_train(rc, data_dir, out_dir);
    }
    if (infer->parsed()) {
      if (infer_seed->count()) rc.seed = seed_flag;
      return run_infer(rc, ckpt_path, out_dir, tokens_flag, data_dir, split, index);
    }
    if (diagnose->parsed()) return run_diagnose(rc, align_path, out_dir, tokens_flag);
    if (stress->parsed()) {
      if (stress_seed->count()) rc.seed = seed_flag;
      return run_stress(rc, data_dir, out_dir);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
