#include "testing.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "egsnet/checkpoint.hpp"
#include "egsnet/tensor_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CliResult run_cli(const std::string& args, const egsnet::test::ScopedTempDir& tmp) {
  static int invocation = 0;
  const std::string tag = std::to_string(invocation++);
  const std::string out_f = tmp.str("cli-stdout-" + tag);
  const std::string err_f = tmp.str("cli-stderr-" + tag);
  const std::string cmd =
      std::string(EGSNET_CLI_PATH) + " " + args + " >" + out_f + " 2>" + err_f;
  const int raw = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_f);
  r.err = slurp(err_f);
  return r;
}

std::string write_config(const egsnet::test::ScopedTempDir& tmp) {
  const std::string path = tmp.str("tiny.cfg");
  std::ofstream f(path);
  f << "image_side = 20\n"
       "synthetic_num_basic_classes = 5\n"
       "synthetic_num_compound_classes = 4\n"
       "synthetic_samples_per_class = 12\n"
       "encoder_channels = 16\n"
       "encoder_blocks = 2\n"
       "N = 3\nK = 2\nQ = 3\n"
       "batch_size = 8\n"
       "epochs_joint = 2\n"
       "epochs_alternate = 1\n"
       "episodes_per_epoch = 4\n"
       "period_len = 2\n"
       "eval_num_tasks = 10\n";
  return path;
}

// History text with the run-dependent wall-clock column blanked out.
std::string history_minus_walltime(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::ostringstream out;
  for (std::string line; std::getline(in, line);) {
    const auto cut = line.rfind(',');
    out << line.substr(0, cut) << "\n";
  }
  return out.str();
}

std::map<std::string, std::string> dir_digests(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) {
      out[fs::relative(entry.path(), root).string()] = egsnet::sha256_hex(slurp(entry.path()));
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and config problems exit 2; missing files exit 1") {
  egsnet::test::ScopedTempDir tmp("cli-codes");
  const std::string cfg = write_config(tmp);

  CHECK(run_cli("", tmp).code == 2);                       // a subcommand is required
  CHECK(run_cli("train --bogus-flag", tmp).code == 2);     // unknown option
  CHECK(run_cli("--help", tmp).code == 0);
  CHECK(run_cli("schema", tmp).code == 0);

  auto bad_value = run_cli("train --config " + cfg + " --set lr=fast", tmp);
  CHECK(bad_value.code == 2);
  CHECK(bad_value.err.find("lr") != std::string::npos);

  auto bad_key = run_cli("synth --config " + cfg + " --set no_such_knob=1", tmp);
  CHECK(bad_key.code == 2);
  CHECK(bad_key.err.find("no_such_knob") != std::string::npos);

  auto bad_mode = run_cli("train --config " + cfg + " --mode both --out " + tmp.str("x"), tmp);
  CHECK(bad_mode.code == 2);

  CHECK(run_cli("eval --checkpoint " + tmp.str("absent.bin"), tmp).code == 1);

  const std::string garbage = tmp.str("garbage.bin");
  {
    std::ofstream f(garbage);
    f << "not a checkpoint";
  }
  auto mismatch = run_cli("eval --checkpoint " + garbage, tmp);
  CHECK(mismatch.code == 3);
  CHECK(mismatch.err.find("artifact mismatch") != std::string::npos);
}

TEST_CASE("schema lists every config key with defaults") {
  egsnet::test::ScopedTempDir tmp("cli-schema");
  auto r = run_cli("schema", tmp);
  REQUIRE(r.code == 0);
  for (const char* key : {"image_side", "lambda_emo", "theta_gamma", "epochs_joint",
                          "period_len", "eval_num_tasks", "data_registry", "metric"}) {
    CHECK(r.out.find(key) != std::string::npos);
  }
}

TEST_CASE("synth writes a loadable registry and reruns are byte-identical") {
  egsnet::test::ScopedTempDir tmp("cli-synth");
  const std::string cfg = write_config(tmp);

  auto a = run_cli("synth --config " + cfg + " --out " + tmp.str("suite-a"), tmp);
  REQUIRE(a.code == 0);
  CHECK(a.out.find("suite-a") != std::string::npos);
  auto b = run_cli("synth --config " + cfg + " --out " + tmp.str("suite-b"), tmp);
  REQUIRE(b.code == 0);

  auto da = dir_digests(tmp.str("suite-a"));
  auto db = dir_digests(tmp.str("suite-b"));
  CHECK(da.size() > 0);
  CHECK((da == db));

  // a training run can consume the dumped registry end to end
  auto t = run_cli("train --config " + cfg + " --set data_registry=" + tmp.str("suite-a") +
                       " --set epochs_joint=1 --set epochs_alternate=0 --mode joint_only" +
                       " --out " + tmp.str("from-disk"),
                   tmp);
  CHECK(t.code == 0);
}

TEST_CASE("train writes manifest plus artifacts; modes are tagged through") {
  egsnet::test::ScopedTempDir tmp("cli-train");
  const std::string cfg = write_config(tmp);
  const std::string out = tmp.str("jo");

  auto r = run_cli("train --config " + cfg + " --mode joint_only --out " + out, tmp);
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(out + "/run_manifest.json"));
  REQUIRE(fs::exists(out + "/history.csv"));
  REQUIRE(fs::exists(out + "/checkpoint_final.bin"));

  auto manifest = nlohmann::json::parse(slurp(out + "/run_manifest.json"));
  CHECK(manifest["schema_version"] == 1);
  CHECK(manifest["mode"] == "joint_only");
  CHECK(manifest["config_hash"].get<std::string>().size() == 64);
  CHECK(manifest["artifacts"]["final_checkpoint"] == out + "/checkpoint_final.bin");
  for (const auto& p : manifest["artifacts"]["checkpoints"]) {
    CHECK(fs::exists(p.get<std::string>()));
  }

  auto ckpt = egsnet::load_checkpoint(out + "/checkpoint_final.bin");
  CHECK(ckpt.meta.mode == "joint_only");
  CHECK(ckpt.meta.stage == "joint");
  CHECK_FALSE(ckpt.meta.split);

  // every history row of a joint-only run belongs to the joint stage
  std::istringstream hist(slurp(out + "/history.csv"));
  std::string line;
  std::getline(hist, line);  // header
  int rows = 0;
  while (std::getline(hist, line)) {
    if (line.empty()) continue;
    CHECK(line.find(",joint,shared,") != std::string::npos);
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("training reruns and resumed runs reproduce the history exactly") {
  egsnet::test::ScopedTempDir tmp("cli-repro");
  const std::string cfg = write_config(tmp);
  const std::string extra = " --set checkpoint_interval=1 --set epochs_alternate=2";

  auto r1 = run_cli("train --config " + cfg + extra + " --out " + tmp.str("r1"), tmp);
  REQUIRE(r1.code == 0);
  auto r2 = run_cli("train --config " + cfg + extra + " --out " + tmp.str("r2"), tmp);
  REQUIRE(r2.code == 0);

  const std::string h1 = history_minus_walltime(tmp.str("r1/history.csv"));
  CHECK(h1 == history_minus_walltime(tmp.str("r2/history.csv")));
  CHECK(h1.find("epoch,stage,branch,") == 0);

  auto final1 = egsnet::load_checkpoint(tmp.str("r1/checkpoint_final.bin"));
  auto final2 = egsnet::load_checkpoint(tmp.str("r2/checkpoint_final.bin"));
  REQUIRE(final1.tensors.size() == final2.tensors.size());
  for (const auto& [name, value] : final1.tensors) {
    CHECK(torch::equal(value, final2.tensors.at(name)));
  }

  auto r3 = run_cli("train --config " + cfg + extra + " --resume " +
                        tmp.str("r1/checkpoint_joint_epoch_0001.bin") + " --out " + tmp.str("r3"),
                    tmp);
  REQUIRE(r3.code == 0);
  CHECK(h1 == history_minus_walltime(tmp.str("r3/history.csv")));
  auto final3 = egsnet::load_checkpoint(tmp.str("r3/checkpoint_final.bin"));
  for (const auto& [name, value] : final1.tensors) {
    CHECK(torch::equal(value, final3.tensors.at(name)));
  }

  // resuming under a deviating config is an artifact mismatch
  auto bad = run_cli("train --config " + cfg + extra + " --set lr=0.002 --resume " +
                         tmp.str("r1/checkpoint_joint_epoch_0001.bin") + " --out " +
                         tmp.str("r4"),
                     tmp);
  CHECK(bad.code == 3);
}

TEST_CASE("eval bundles are deterministic and comparable; mismatched grids refuse") {
  egsnet::test::ScopedTempDir tmp("cli-eval");
  const std::string cfg = write_config(tmp);

  auto t = run_cli("train --config " + cfg + " --out " + tmp.str("run"), tmp);
  REQUIRE(t.code == 0);
  const std::string ckpt = tmp.str("run/checkpoint_final.bin");

  auto e1 = run_cli("eval --checkpoint " + ckpt + " --splits basic,compound --shots 1,2 --out " +
                        tmp.str("e1"),
                    tmp);
  REQUIRE(e1.code == 0);
  CHECK(e1.out.find("basic 1-shot:") != std::string::npos);
  auto e2 = run_cli("eval --checkpoint " + ckpt + " --splits basic,compound --shots 1,2 --out " +
                        tmp.str("e2"),
                    tmp);
  REQUIRE(e2.code == 0);
  CHECK(slurp(tmp.str("e1/report.json")) == slurp(tmp.str("e2/report.json")));
  CHECK(slurp(tmp.str("e1/report.csv")) == slurp(tmp.str("e2/report.csv")));

  // overrides flow into the evaluation
  auto e3 = run_cli("eval --checkpoint " + ckpt +
                        " --splits basic --shots 1 --set eval_num_tasks=4 --out " + tmp.str("e3"),
                    tmp);
  REQUIRE(e3.code == 0);
  auto rep = nlohmann::json::parse(slurp(tmp.str("e3/report.json")));
  CHECK(rep["num_tasks"] == 4);
  CHECK(rep["evaluations"].size() == 1);

  auto cmp = run_cli("compare " + tmp.str("e1") + " " + tmp.str("e2"), tmp);
  REQUIRE(cmp.code == 0);
  std::istringstream table(cmp.out);
  std::string header, row1, row2;
  std::getline(table, header);
  std::getline(table, row1);
  std::getline(table, row2);
  CHECK(header ==
        "run,basic_1shot_mean,basic_1shot_ci95,basic_2shot_mean,basic_2shot_ci95,"
        "compound_1shot_mean,compound_1shot_ci95,compound_2shot_mean,compound_2shot_ci95");
  CHECK(row1.substr(row1.find(',')) == row2.substr(row2.find(',')));

  auto out_file = run_cli(
      "compare " + tmp.str("e1") + " " + tmp.str("e2") + " --out " + tmp.str("table.csv"), tmp);
  REQUIRE(out_file.code == 0);
  CHECK(slurp(tmp.str("table.csv")).find(header) == 0);

  auto grid_mismatch = run_cli("compare " + tmp.str("e1") + " " + tmp.str("e3"), tmp);
  CHECK(grid_mismatch.code == 3);

  auto shots_err = run_cli("eval --checkpoint " + ckpt + " --shots 0", tmp);
  CHECK(shots_err.code == 2);
}

}  // TEST_SUITE
