/* Copyright 2026 The DUET Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "catch_amalgamated.hpp"
#include "duet/cli.hpp"
#include "oracles.hpp"

using namespace duet;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

Outcome in_process(std::vector<std::string> args) {
  args.insert(args.begin(), "duet");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Outcome o;
  o.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the installed binary with shell-quoted args.
Outcome subprocess(const std::string& args, const oracle::TempDir& dir) {
  const char* bin = std::getenv("DUET_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string("'") + bin + "' " + args + " > '" + (dir / "out").string() + "' 2> '" +
                          (dir / "err").string() + "'";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(dir / "out");
  o.err = slurp(dir / "err");
  return o;
}

const char* kSmallConfig =
    "seed = 3\n"
    "synth.devices = 3\n"
    "synth.train_sessions = 6\n"
    "synth.test_sessions = 2\n"
    "synth.items = 80\n"
    "test_ratio = 20\n"
    "epochs = 2\n"
    "embed_dim = 4\n"
    "hidden_dim = 8\n"
    "m = 2\n"
    "ppg.shared_dim = 6\n"
    "ppg.layer_dim = 4\n"
    "ppg.hidden_dim = 3\n"
    "finetune.steps = 3\n";

}  // namespace

TEST_CASE("help exits zero and lists the subcommands") {
  oracle::TempDir dir;
  const Outcome o = subprocess("--help", dir);
  CHECK(o.code == 0);
  for (const char* cmd : {"synth", "train", "serve", "device", "simulate", "eval"}) CHECK_THAT(o.out, ContainsSubstring(cmd));
  CHECK(subprocess("train --help", dir).code == 0);
}

TEST_CASE("unknown flags are rejected by name") {
  oracle::TempDir dir;
  const Outcome o = subprocess("train --frobnicate 3", dir);
  CHECK(o.code == kExitUsage);
  CHECK_THAT(o.err, ContainsSubstring("--frobnicate"));
  CHECK(subprocess("", dir).code == kExitUsage);
  CHECK(subprocess("launch", dir).code == kExitUsage);
}

TEST_CASE("simulate without a checkpoint is a checkpoint error") {
  oracle::TempDir dir;
  std::ofstream(dir / "d.csv") << "# items=5\ndevice_id,session_id,t,item_id,label\n";
  const Outcome o = in_process({"simulate", "--dataset", (dir / "d.csv").string()});
  CHECK(o.code == kExitCheckpoint);
  CHECK_THAT(o.err, ContainsSubstring("checkpoint"));
  const Outcome missing =
      in_process({"simulate", "--dataset", (dir / "d.csv").string(), "--checkpoint", (dir / "none.ckpt").string()});
  CHECK(missing.code == kExitCheckpoint);
}

TEST_CASE("config problems exit with the config code") {
  oracle::TempDir dir;
  std::ofstream(dir / "bad.cfg") << "gamma = 1.5\n";
  const Outcome o = in_process({"synth", "--config", (dir / "bad.cfg").string(), "--out", (dir / "d.csv").string()});
  CHECK(o.code == kExitConfig);
  CHECK_THAT(o.err, ContainsSubstring("(0,1]"));
  CHECK(in_process({"synth", "--set", "nope=1", "--out", (dir / "d.csv").string()}).code == kExitConfig);
}

TEST_CASE("synth, train and simulate are deterministic end to end") {
  oracle::TempDir dir;
  std::ofstream(dir / "c.cfg") << kSmallConfig;
  const std::string cfg = (dir / "c.cfg").string();
  std::string reports[2];
  for (int run = 0; run < 2; ++run) {
    const std::string tag = std::to_string(run);
    const std::string data = (dir / ("d" + tag + ".csv")).string();
    const std::string ckpt = (dir / ("m" + tag + ".ckpt")).string();
    const std::string report = (dir / ("r" + tag + ".csv")).string();
    REQUIRE(in_process({"synth", "--config", cfg, "--out", data}).code == 0);
    const Outcome t = in_process({"train", "--config", cfg, "--dataset", data, "--out", ckpt});
    INFO(t.err);
    REQUIRE(t.code == 0);
    const Outcome s = in_process({"simulate", "--config", cfg, "--dataset", data, "--checkpoint", ckpt, "--out", report});
    INFO(s.err);
    REQUIRE(s.code == 0);
    reports[run] = slurp(report);
    CHECK(slurp(data) == slurp(dir / "d0.csv"));
    CHECK(slurp(ckpt) == slurp(dir / "m0.ckpt"));
  }
  CHECK(reports[0] == reports[1]);
  CHECK_THAT(reports[0], ContainsSubstring("# seed = 3"));
  CHECK_THAT(reports[0], ContainsSubstring("duet-embedding,all,"));
  CHECK_THAT(reports[0], ContainsSubstring("finetune,3,"));

  const Outcome e = in_process({"eval", "--config", cfg, "--dataset", (dir / "d0.csv").string(), "--checkpoint",
                                (dir / "m0.ckpt").string()});
  CHECK(e.code == 0);
  CHECK_THAT(e.out, ContainsSubstring("static: sessions=6"));
}
