#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "attnkit/io.hpp"
#include "attnkit/rng.hpp"
#include "attnkit/toy/dataset.hpp"
#include "attnkit/types.hpp"

using namespace attnkit;
namespace fs = std::filesystem;

namespace {

const std::string kTmp = "cli_test_tmp";

struct CmdResult {
  int code = -1;
  std::string out;
  std::string err;
};

CmdResult run_cli(const std::string& args) {
  fs::create_directories(kTmp);
  std::string out_path = kTmp + "/stdout.txt";
  std::string err_path = kTmp + "/stderr.txt";
  std::string cmd =
      std::string(ATTNKIT_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
  int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = io::read_text_file(out_path);
  r.err = io::read_text_file(err_path);
  return r;
}

std::string slurp(const std::string& path) { return io::read_text_file(path); }

io::json tiny_task_json() {
  io::json task;
  task["vocab"] = 3;
  task["min_train_len"] = 2;
  task["max_train_len"] = 4;
  task["min_stress_len"] = 5;
  task["max_stress_len"] = 8;
  task["train_count"] = 6;
  task["heldout_count"] = 4;
  task["stress_count"] = 4;
  return task;
}

io::json tiny_model_json() {
  io::json model;
  model["emb_dim"] = 4;
  model["enc_hidden"] = 3;
  model["dec_hidden"] = 6;
  model["attn_dim"] = 5;
  model["loc_filters"] = 2;
  model["loc_width"] = 3;
  model["gmm_components"] = 2;
  model["init_bias"] = 1.0;
  model["noise_scale"] = 0.5;
  return model;
}

}  // namespace

TEST_CASE("formatted doubles survive a text round trip") {
  std::vector<double> vals = {0.1,    1.0 / 3.0, 1e300,          5e-324, -2.5e-7,
                              3.14159265358979312, -0.0, 46376.0, 1e-12};
  for (double v : vals) {
    double back = std::stod(io::format_double(v));
    REQUIRE(back == v);
  }
}

TEST_CASE("matrix csv round trips exactly") {
  Rng rng(77);
  Matrix m(5, 4);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m(i, j) = rng.gaussian() * std::pow(10.0, i - 2);
  std::string path = kTmp + "/mat.csv";
  io::write_matrix_csv(path, m);
  Matrix back = io::read_matrix_csv(path);
  REQUIRE(back.rows == m.rows);
  REQUIRE(back.cols == m.cols);
  REQUIRE(back.a == m.a);
}

TEST_CASE("path csv keeps header and positions") {
  std::vector<int> path = {1, 2, 2, 5, 5, 5};
  std::string file = kTmp + "/path.csv";
  io::write_path_csv(file, path);
  std::string text = slurp(file);
  REQUIRE(text.rfind("step,position\n", 0) == 0);
  REQUIRE(io::read_path_csv(file) == path);
}

TEST_CASE("json matrix conversion is lossless") {
  Rng rng(78);
  Matrix m(3, 7);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m(i, j) = rng.uniform(-5.0, 5.0);
  Matrix back = io::matrix_from_json(io::matrix_to_json(m));
  REQUIRE(back.a == m.a);
}

TEST_CASE("config hashes are stable and content sensitive") {
  io::json a;
  a["steps"] = 100;
  a["lr"] = 0.004;
  io::json b;
  b["lr"] = 0.004;
  b["steps"] = 100;  // same content, different insertion order
  REQUIRE(io::config_hash(a) == io::config_hash(b));
  io::json c = a;
  c["steps"] = 101;
  REQUIRE(io::config_hash(a) != io::config_hash(c));
  std::string hex = io::config_hash_hex(a);
  REQUIRE(hex.size() == 16);
  for (char ch : hex) REQUIRE(std::isxdigit(static_cast<unsigned char>(ch)));
}

TEST_CASE("json files write identically on rewrite") {
  io::json j;
  j["alpha"] = 0.12345678901234567;
  j["list"] = {1, 2, 3};
  std::string p1 = kTmp + "/a.json", p2 = kTmp + "/b.json";
  io::write_json_file(p1, j);
  io::write_json_file(p2, j);
  REQUIRE(slurp(p1) == slurp(p2));
}

TEST_CASE("gen writes identical artifacts on rerun") {
  fs::remove_all(kTmp + "/gen");
  io::json cfg;
  cfg["seed"] = 5;
  cfg["task"] = tiny_task_json();
  std::string cfg_path = kTmp + "/gen/cfg.json";
  io::write_json_file(cfg_path, cfg);

  CmdResult r1 = run_cli("gen --config " + cfg_path + " --out " + kTmp + "/gen/a");
  CAPTURE(r1.err);
  REQUIRE(r1.code == 0);
  REQUIRE(r1.out.find("6 train / 4 heldout / 4 stress") != std::string::npos);
  for (const char* f : {"train.jsonl", "heldout.jsonl", "stress.jsonl", "manifest.json"})
    REQUIRE(fs::exists(kTmp + "/gen/a/" + f));

  CmdResult r2 = run_cli("gen --config " + cfg_path + " --out " + kTmp + "/gen/b");
  REQUIRE(r2.code == 0);
  for (const char* f : {"train.jsonl", "heldout.jsonl", "stress.jsonl", "manifest.json"})
    REQUIRE(slurp(kTmp + "/gen/a/" + f) == slurp(kTmp + "/gen/b/" + f));

  io::json manifest = io::read_json_file(kTmp + "/gen/a/manifest.json");
  REQUIRE(manifest.at("command") == "gen");
  REQUIRE(manifest.at("config") == cfg);
  REQUIRE(manifest.at("seed") == 5);
  REQUIRE(manifest.at("config_hash").get<std::string>().size() == 16);
}

TEST_CASE("unknown config keys are rejected before any output") {
  fs::remove_all(kTmp + "/badcfg");
  io::json cfg;
  cfg["seed"] = 5;
  cfg["taks"] = tiny_task_json();  // typo on purpose
  std::string cfg_path = kTmp + "/badcfg/cfg.json";
  io::write_json_file(cfg_path, cfg);
  CmdResult r = run_cli("gen --config " + cfg_path + " --out " + kTmp + "/badcfg/out");
  REQUIRE(r.code == 1);
  REQUIRE(r.err.find("unknown key 'taks'") != std::string::npos);
  REQUIRE_FALSE(fs::exists(kTmp + "/badcfg/out"));

  io::json cfg2;
  cfg2["train"] = io::json::object();
  cfg2["train"]["step"] = 30;  // nested typo
  std::string cfg2_path = kTmp + "/badcfg/cfg2.json";
  io::write_json_file(cfg2_path, cfg2);
  CmdResult r2 = run_cli("gen --config " + cfg2_path + " --out " + kTmp + "/badcfg/out2");
  REQUIRE(r2.code == 1);
  REQUIRE(r2.err.find("unknown key 'step'") != std::string::npos);
  REQUIRE_FALSE(fs::exists(kTmp + "/badcfg/out2"));
}

TEST_CASE("oracle reports instance count and exits clean") {
  CmdResult r = run_cli("oracle --random 20 --seed 7");
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("20/20 instances within 1e-12") != std::string::npos);

  // with a report directory the run also leaves a manifest behind
  fs::remove_all(kTmp + "/oracle");
  CmdResult r2 = run_cli("oracle --random 5 --seed 9 --out " + kTmp + "/oracle");
  REQUIRE(r2.code == 0);
  io::json report = io::read_json_file(kTmp + "/oracle/oracle_report.json");
  REQUIRE(report.at("passed") == 5);
  REQUIRE(report.at("instances") == 5);
  REQUIRE(report.at("max_abs_error").get<double>() <= 1e-12);
  REQUIRE(fs::exists(kTmp + "/oracle/manifest.json"));
}

TEST_CASE("infer fails cleanly on a missing checkpoint") {
  fs::remove_all(kTmp + "/nockpt");
  CmdResult r = run_cli("infer --checkpoint " + kTmp + "/nockpt/none.json --tokens 1 --out " +
                        kTmp + "/nockpt/out");
  REQUIRE(r.code == 1);
  REQUIRE(r.err.find(kTmp + "/nockpt/none.json") != std::string::npos);
  REQUIRE_FALSE(fs::exists(kTmp + "/nockpt/out"));
}

TEST_CASE("train infer diagnose stress pipeline produces stable artifacts") {
  const std::string root = kTmp + "/pipe";
  fs::remove_all(root);

  io::json cfg;
  cfg["seed"] = 5;
  cfg["task"] = tiny_task_json();
  cfg["mechanism"] = "sma";
  cfg["model"] = tiny_model_json();
  cfg["train"] = {{"steps", 30}, {"batch_size", 4}, {"warmup_steps", 5}};
  cfg["infer"] = {{"mode", "soft"}, {"max_frames", 20}};
  std::string cfg_path = root + "/cfg.json";
  io::write_json_file(cfg_path, cfg);

  REQUIRE(run_cli("gen --config " + cfg_path + " --out " + root + "/data").code == 0);

  CmdResult t1 = run_cli("train --config " + cfg_path + " --data " + root + "/data --out " +
                         root + "/run1");
  CAPTURE(t1.err);
  REQUIRE(t1.code == 0);
  for (const char* f : {"checkpoint.json", "loss_curve.csv", "train_summary.json", "manifest.json"})
    REQUIRE(fs::exists(root + "/run1/" + f));
  std::string curve = slurp(root + "/run1/loss_curve.csv");
  REQUIRE(curve.rfind("step,loss\n", 0) == 0);
  REQUIRE(std::count(curve.begin(), curve.end(), '\n') == 31);  // header + 30 steps

  CmdResult t2 = run_cli("train --config " + cfg_path + " --data " + root + "/data --out " +
                         root + "/run2");
  REQUIRE(t2.code == 0);
  REQUIRE(slurp(root + "/run1/checkpoint.json") == slurp(root + "/run2/checkpoint.json"));
  REQUIRE(slurp(root + "/run1/loss_curve.csv") == slurp(root + "/run2/loss_curve.csv"));

  io::json summary = io::read_json_file(root + "/run1/train_summary.json");
  REQUIRE(summary.at("steps") == 30);
  REQUIRE(summary.contains("heldout_loss"));

  CmdResult i1 = run_cli("infer --config " + cfg_path + " --checkpoint " + root +
                         "/run1/checkpoint.json --data " + root +
                         "/data --split heldout --index 0 --out " + root + "/inf1");
  CAPTURE(i1.err);
  REQUIRE(i1.code == 0);
  for (const char* f : {"frames.csv", "alignment.csv", "infer_summary.json", "manifest.json"})
    REQUIRE(fs::exists(root + "/inf1/" + f));
  io::json isummary = io::read_json_file(root + "/inf1/infer_summary.json");
  REQUIRE(isummary.at("mode") == "soft");
  REQUIRE(isummary.contains("frame_accuracy"));
  REQUIRE(isummary.at("frames").get<int>() >= 1);

  CmdResult i2 = run_cli("infer --config " + cfg_path + " --checkpoint " + root +
                         "/run1/checkpoint.json --data " + root +
                         "/data --split heldout --index 0 --out " + root + "/inf2");
  REQUIRE(i2.code == 0);
  REQUIRE(slurp(root + "/inf1/frames.csv") == slurp(root + "/inf2/frames.csv"));
  REQUIRE(slurp(root + "/inf1/infer_summary.json") == slurp(root + "/inf2/infer_summary.json"));

  // hard mode leaves a committed path whose first step is pinned to entry 1
  io::json hard_cfg = cfg;
  hard_cfg["infer"]["mode"] = "hard_greedy";
  std::string hard_cfg_path = root + "/cfg_hard.json";
  io::write_json_file(hard_cfg_path, hard_cfg);
  CmdResult h1 = run_cli("infer --config " + hard_cfg_path + " --checkpoint " + root +
                         "/run1/checkpoint.json --tokens 0,1,2,3 --out " + root + "/hard1");
  CAPTURE(h1.err);
  REQUIRE(h1.code == 0);
  REQUIRE(fs::exists(root + "/hard1/path.csv"));
  std::vector<int> path = io::read_path_csv(root + "/hard1/path.csv");
  REQUIRE_FALSE(path.empty());
  REQUIRE(path.front() == 1);

  // diagnose the soft alignment, exempting the zero-duration punctuation
  auto heldout = toy::read_cases_jsonl(root + "/data/heldout.jsonl");
  std::string tokens_arg;
  for (size_t i = 0; i < heldout[0].tokens.size(); ++i) {
    if (i) tokens_arg += ',';
    tokens_arg += std::to_string(heldout[0].tokens[i]);
  }
  CmdResult d1 = run_cli("diagnose --config " + cfg_path + " --alignment " + root +
                         "/inf1/alignment.csv --tokens " + tokens_arg + " --out " + root +
                         "/diag1");
  CAPTURE(d1.err);
  REQUIRE(d1.code == 0);
  for (const char* f :
       {"metrics.json", "classification.json", "heatmap.pgm", "heatmap.csv", "manifest.json"})
    REQUIRE(fs::exists(root + "/diag1/" + f));
  REQUIRE(slurp(root + "/diag1/heatmap.pgm").rfind("P2\n", 0) == 0);
  io::json cls = io::read_json_file(root + "/diag1/classification.json");
  REQUIRE(cls.at("case_failed").is_boolean());
  io::json metrics = io::read_json_file(root + "/diag1/metrics.json");
  REQUIRE(metrics.at("tokens").get<int>() == static_cast<int>(heldout[0].tokens.size()));

  CmdResult d2 = run_cli("diagnose --config " + cfg_path + " --alignment " + root +
                         "/inf1/alignment.csv --tokens " + tokens_arg + " --out " + root +
                         "/diag2");
  REQUIRE(d2.code == 0);
  REQUIRE(slurp(root + "/diag1/metrics.json") == slurp(root + "/diag2/metrics.json"));

  // stress over the generated split with the single trained checkpoint
  io::json stress_cfg;
  stress_cfg["seed"] = 5;
  stress_cfg["task"] = tiny_task_json();
  stress_cfg["infer"] = {{"max_frames", 20}};
  stress_cfg["stress"] = io::json::object();
  stress_cfg["stress"]["entries"] = io::json::array();
  stress_cfg["stress"]["entries"].push_back(
      {{"checkpoint", root + "/run1/checkpoint.json"}, {"infer_mode", "soft"}, {"label", "sma_soft"}});
  std::string stress_cfg_path = root + "/cfg_stress.json";
  io::write_json_file(stress_cfg_path, stress_cfg);

  CmdResult s1 = run_cli("stress --config " + stress_cfg_path + " --data " + root +
                         "/data --out " + root + "/st1");
  CAPTURE(s1.err);
  REQUIRE(s1.code == 0);  // single entry: report only, no comparison gate
  REQUIRE(fs::exists(root + "/st1/stress_report.csv"));
  REQUIRE(fs::exists(root + "/st1/sma_soft_cases.csv"));
  std::string report = slurp(root + "/st1/stress_report.csv");
  REQUIRE(report.find("sma_soft,sma,soft,4,") != std::string::npos);

  CmdResult s2 = run_cli("stress --config " + stress_cfg_path + " --data " + root +
                         "/data --out " + root + "/st2");
  REQUIRE(s2.code == 0);
  REQUIRE(slurp(root + "/st1/stress_report.csv") == slurp(root + "/st2/stress_report.csv"));
  REQUIRE(slurp(root + "/st1/sma_soft_cases.csv") == slurp(root + "/st2/sma_soft_cases.csv"));

  // the stress gate itself: an untrained model joins in and must lose to sma
  io::json base_cfg = cfg;
  base_cfg["mechanism"] = "baseline_lsa";
  base_cfg["train"] = {{"steps", 1}, {"batch_size", 1}};
  std::string base_cfg_path = root + "/cfg_base.json";
  io::write_json_file(base_cfg_path, base_cfg);
  REQUIRE(run_cli("train --config " + base_cfg_path + " --data " + root + "/data --out " + root +
                  "/base_run")
              .code == 0);

  io::json duel_cfg = stress_cfg;
  duel_cfg["stress"]["entries"].push_back({{"checkpoint", root + "/base_run/checkpoint.json"},
                                           {"infer_mode", "soft"},
                                           {"label", "baseline_soft"}});
  std::string duel_cfg_path = root + "/cfg_duel.json";
  io::write_json_file(duel_cfg_path, duel_cfg);
  CmdResult duel = run_cli("stress --config " + duel_cfg_path + " --data " + root +
                           "/data --out " + root + "/duel");
  REQUIRE((duel.code == 0 || duel.code == 3));
  REQUIRE(duel.out.find("robustness gate") != std::string::npos);
}
