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

#include <fstream>

#include "catch_amalgamated.hpp"
#include "duet/config.hpp"
#include "oracles.hpp"

using namespace duet;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("an empty file is the default config") {
  CHECK(parse_config("").serialize() == Config{}.serialize());
  CHECK(parse_config("# only a comment\n\n   \n").serialize() == Config{}.serialize());
  oracle::TempDir dir;
  std::ofstream(dir / "empty.cfg").close();
  CHECK(load_config(dir / "empty.cfg").serialize() == Config{}.serialize());
}

TEST_CASE("values parse with comments and whitespace") {
  const Config c = parse_config("seed = 7\n  gamma=0.5 # discount\ndataset.path = /tmp/x.csv\noptimizer = adam\n");
  CHECK(c.seed == 7);
  CHECK(c.gamma == 0.5f);
  CHECK(c.dataset_path == "/tmp/x.csv");
  CHECK(c.train_config().optimizer == OptimizerKind::kAdam);
  CHECK(c.train_config().gamma == 0.5f);
  CHECK(c.synth_config().seed == 7);
}

TEST_CASE("gamma outside (0,1] is a range error") {
  CHECK_THROWS_WITH(parse_config("gamma = 1.5\n"), ContainsSubstring("(0,1]"));
  CHECK_THROWS_WITH(parse_config("gamma = 0\n"), ContainsSubstring("(0,1]"));
  CHECK(parse_config("gamma = 1\n").gamma == 1.0f);
}

TEST_CASE("unknown keys and bad values name their line") {
  CHECK_THROWS_WITH(parse_config("seed = 1\n\ngama = 0.9\n", "c.cfg"),
                    ContainsSubstring("c.cfg:3") && ContainsSubstring("gama"));
  CHECK_THROWS_WITH(parse_config("epochs = many\n", "c.cfg"), ContainsSubstring("c.cfg:1"));
  CHECK_THROWS_WITH(parse_config("m = 0\n"), ContainsSubstring("m"));
  CHECK_THROWS_AS(parse_config("tau = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("bandwidth.profile = 3g\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("eval.modes = duet,nope\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("just words\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/c.cfg"), ConfigError);
}

TEST_CASE("serialized configs reload to identical values") {
  Config c;
  c.seed = 123;
  c.gamma = 0.123456789f;
  c.tau = 3.3f;
  c.lr = 1e-7f;
  c.dataset_path = "data/ml.csv";
  c.bandwidth_profile = "5g-100";
  c.report_timing = true;
  c.eval_modes = "static,duet";
  c.synth_drift = 1.0f;
  const std::string text = c.serialize();
  CHECK(parse_config(text).serialize() == text);
  CHECK(parse_config(text).gamma == c.gamma);
  for (const std::string& key : config_keys()) CHECK_THAT(text, ContainsSubstring(key + " = "));
}

TEST_CASE("overrides apply on top of a file") {
  Config c = parse_config("seed = 2\n");
  apply_override(c, "seed=9");
  apply_override(c, "eval.modes = static");
  CHECK(c.seed == 9);
  CHECK(c.modes() == std::vector<std::string>{"static"});
  CHECK_THROWS_AS(apply_override(c, "seed"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "nope=1"), ConfigError);
}

TEST_CASE("every documented key is present") {
  const std::vector<std::string> keys = config_keys();
  for (const char* k : {"seed", "gamma", "tau", "m", "lr", "epochs", "batch", "context_len", "session_len",
                        "embed_dim", "hidden_dim", "dataset.path", "bandwidth.profile"})
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
}
