// Copyright 2026 The foodmil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "foodmil/cli.hpp"
#include "test_util.hpp"

namespace foodmil {
namespace {

namespace fs = std::filesystem;
using foodmil::testing::read_text;

struct Captured {
  int code;
  std::string out;
  std::string err;
};

Captured cli(std::vector<std::string> args) {
  args.insert(args.begin(), "foodmil");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

int shell(const std::string& args) {
  const int status = std::system((std::string(FOODMIL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = foodmil::testing::scratch_dir("cli");
    const auto r = cli({"synth", "--out-dir", (dir_ / "data").string(), "--n-tracts", "60", "--m", "6", "--k-max",
                        "8", "--n-cities", "3", "--seed", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  static std::vector<std::string> data_args() {
    return {"--embeddings", (dir_ / "data/embeddings.jsonl").string(), "--atlas", (dir_ / "data/atlas.csv").string(),
            "--boundaries", (dir_ / "data/boundaries.geojson").string(), "--incomes",
            (dir_ / "data/incomes.csv").string()};
  }

  static std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  }

  static inline fs::path dir_;
};

TEST_F(Cli, NoArgumentsIsUsageError) {
  const auto r = cli({});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("synth"), std::string::npos);
  EXPECT_EQ(cli({"bogus"}).code, 2);
  EXPECT_EQ(cli({"train", "--split", "x"}).code, 2);
}

TEST_F(Cli, MissingInputIsDataError) {
  auto args = with({"train", "--split", "none.json", "--out", (dir_ / "c.json").string()}, data_args());
  ASSERT_EQ(args[5], "--embeddings");
  args[6] = (dir_ / "nope.jsonl").string();
  const auto r = cli(args);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("nope.jsonl"), std::string::npos) << r.err;
}

TEST_F(Cli, BinaryExitCodes) {
  EXPECT_EQ(shell(""), 2);
  EXPECT_EQ(shell("--help"), 0);
  EXPECT_EQ(shell("eval --embeddings /nonexistent --atlas a --boundaries b --checkpoint c"), 1);
}

TEST_F(Cli, FullPipelineIsReproducible) {
  const auto split = (dir_ / "split.json").string();
  ASSERT_EQ(cli(with({"prepare", "--out", split, "--seed", "2"}, data_args())).code, 0);
  const std::vector<std::string> train_opts = {"--split", split, "--learning-rate", "0.001", "--dropout", "0.2",
                                               "--epochs", "5", "--l-dim", "8", "--batch-size", "8"};
  const auto ck1 = (dir_ / "ck1.json").string();
  const auto ck2 = (dir_ / "ck2.json").string();
  const auto ck4 = (dir_ / "ck4.json").string();
  auto r = cli(with(with({"train", "--out", ck1, "--history", (dir_ / "h.json").string()}, train_opts), data_args()));
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(cli(with(with({"train", "--out", ck2}, train_opts), data_args())).code, 0);
  ASSERT_EQ(cli(with(with({"--threads", "4", "train", "--out", ck4}, train_opts), data_args())).code, 0);
  EXPECT_EQ(read_text(ck1), read_text(ck2));
  EXPECT_EQ(read_text(ck1), read_text(ck4));
  EXPECT_EQ(nlohmann::json::parse(read_text(dir_ / "h.json")).size(), 5u);

  const auto rep = (dir_ / "report.json").string();
  r = cli(with({"eval", "--checkpoint", ck1, "--split", split, "--out", rep}, data_args()));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(read_text(rep));
  EXPECT_TRUE(report.contains("accuracy"));
  EXPECT_TRUE(report.contains("f1_average"));

  const auto attn = (dir_ / "attn.csv").string();
  ASSERT_EQ(cli(with({"attention", "--checkpoint", ck1, "--top-k", "2", "--out", attn}, data_args())).code, 0);
  EXPECT_EQ(read_text(attn).rfind("tract_id,image_id,weight,rank\n", 0), 0u);

  const auto map = (dir_ / "map.geojson").string();
  ASSERT_EQ(cli(with({"map", "--checkpoint", ck1, "--out", map}, data_args())).code, 0);
  EXPECT_EQ(nlohmann::json::parse(read_text(map))["features"].size(), 60u);

  // Replay overwrites the checkpoint with identical bytes.
  const auto before = read_text(ck1);
  fs::remove(ck1);
  r = cli({"replay", ck1 + ".manifest.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_text(ck1), before);
}

TEST_F(Cli, ReplayRefusesChangedInputs) {
  const auto split = (dir_ / "split_r.json").string();
  ASSERT_EQ(cli(with({"prepare", "--out", split}, data_args())).code, 0);
  const auto ck = (dir_ / "ck_r.json").string();
  ASSERT_EQ(cli(with({"train", "--out", ck, "--split", split, "--epochs", "1", "--l-dim", "4"}, data_args())).code, 0);
  foodmil::testing::write_text(split, read_text(split) + " ");
  const auto r = cli({"replay", ck + ".manifest.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("changed"), std::string::npos);
}

TEST_F(Cli, HoldoutCityWritesArtifacts) {
  const auto out = dir_ / "holdout";
  const auto r = cli(with({"holdout-city", "--city", "Chicago", "--out-dir", out.string(), "--epochs", "2", "--l-dim",
                           "4", "--use-income"},
                          data_args()));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"split.json", "checkpoint.json", "history.json", "report.json", "holdout.manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto plan = load_split((out / "split.json").string());
  EXPECT_EQ(plan.city, "Chicago");
  EXPECT_TRUE(load_checkpoint((out / "checkpoint.json").string()).model.fusion.has_value());
  EXPECT_EQ(cli(with({"holdout-city", "--city", "Gotham", "--out-dir", out.string()}, data_args())).code, 1);
}

}  // namespace
}  // namespace foodmil
