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

#include <gtest/gtest.h>

#include "foodmil/geodata.hpp"
#include "foodmil/synth.hpp"
#include "test_util.hpp"

namespace foodmil {
namespace {

class Geodata : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = foodmil::testing::scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    warning_sink() = [this](const std::string& m) { warnings_.push_back(m); };
  }
  void TearDown() override { warning_sink() = nullptr; }

  std::string file(const std::string& name, const std::string& text) {
    return foodmil::testing::write_text(dir_ / name, text);
  }

  std::filesystem::path dir_;
  std::vector<std::string> warnings_;
};

TEST_F(Geodata, LoadsWellFormedEmbeddings) {
  const auto path = file("e.jsonl",
                         R"({"image_id":"a","lat":30.1,"lon":-97.7,"city":"Austin","embedding":[1,2,3,4]}
{"image_id":"b","lat":30.2,"lon":-97.8,"city":"Austin","embedding":[0.5,0,0,-1]}

{"image_id":"c","lat":40.0,"lon":-74.0,"city":"New York","embedding":[1e-3,2,3,4.25]}
)");
  const auto set = load_embeddings(path);
  ASSERT_EQ(set.instances.size(), 3u);
  EXPECT_EQ(set.m, 4u);
  EXPECT_EQ(set.instances[2].city, "New York");
  EXPECT_EQ(set.instances[1].features[3], -1.0);
}

TEST_F(Geodata, RaggedEmbeddingNamesLine) {
  const auto path = file("e.jsonl",
                         R"({"image_id":"a","lat":0,"lon":0,"city":"x","embedding":[1,2,3,4]}
{"image_id":"b","lat":0,"lon":0,"city":"x","embedding":[1,2,3,4]}
{"image_id":"c","lat":0,"lon":0,"city":"x","embedding":[1,2,3,4,5]}
)");
  try {
    load_embeddings(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("e.jsonl:3"), std::string::npos) << e.what();
  }
}

TEST_F(Geodata, EmbeddingErrors) {
  EXPECT_THROW(load_embeddings(file("dup.jsonl", R"({"image_id":"a","lat":0,"lon":0,"city":"x","embedding":[1]}
{"image_id":"a","lat":0,"lon":0,"city":"x","embedding":[2]}
)")),
               FormatError);
  EXPECT_THROW(load_embeddings(file("lat.jsonl", R"({"image_id":"a","lat":91,"lon":0,"city":"x","embedding":[1]})")),
               FormatError);
  EXPECT_THROW(load_embeddings(file("bad.jsonl", "{\"image_id\": 3}\n")), FormatError);
  EXPECT_THROW(load_embeddings((dir_ / "absent.jsonl").string()), Error);
}

TEST_F(Geodata, EmptyEmbeddingsFileWarns) {
  const auto set = load_embeddings(file("empty.jsonl", ""));
  EXPECT_TRUE(set.instances.empty());
  EXPECT_EQ(warnings_.size(), 1u);
}

TEST_F(Geodata, AtlasLabelIsAnyFlag) {
  const auto path = file("atlas.csv",
                         "CensusTract,State,LILATracts_1And10,LILATracts_halfAnd10,LILATracts_1And20,LILATracts_Vehicle\n"
                         "01001020100,AL,0,0,0,0\n"
                         "1001020200,AL,0,1,0,0\n"
                         "\"01001020300\",AL,1,1,1,1\n"
                         "01001020400,AL,false,,FALSE,true\n");
  const auto labels = load_atlas(path);
  EXPECT_EQ(labels.at("01001020100"), 0);
  EXPECT_EQ(labels.at("01001020200"), 1);  // leading zero restored
  EXPECT_EQ(labels.at("01001020300"), 1);
  EXPECT_EQ(labels.at("01001020400"), 1);
}

TEST_F(Geodata, AtlasMissingColumnListsAvailable) {
  const auto path = file("atlas.csv", "CensusTract,A,B\n01001020100,0,0\n");
  try {
    load_atlas(path);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("LILATracts_1And10"), std::string::npos);
    EXPECT_NE(msg.find("CensusTract, A, B"), std::string::npos) << msg;
  }
  AtlasOptions custom{"CensusTract", {"A", "B", "A", "B"}};
  EXPECT_EQ(load_atlas(path, custom).at("01001020100"), 0);
}

TEST_F(Geodata, AtlasRejectsGarbage) {
  EXPECT_THROW(load_atlas(file("a.csv", "CensusTract,A,B,C,D\n01001020100,0,0,maybe,0\n"), {"CensusTract", {"A", "B", "C", "D"}}),
               FormatError);
  EXPECT_THROW(load_atlas(file("b.csv", "CensusTract,A,B,C,D\n01001020100,0,0,0,0\n01001020100,0,0,0,0\n"),
                          {"CensusTract", {"A", "B", "C", "D"}}),
               FormatError);
}

TEST_F(Geodata, IncomesWithMissingValues) {
  const auto inc = load_incomes(file("inc.csv", "GEOID,median_household_income\n01001020100,52000\n01001020200,\n"
                                                "01001020300,-666666666\n"));
  EXPECT_EQ(*inc.at("01001020100"), 52000.0);
  EXPECT_FALSE(inc.at("01001020200"));
  EXPECT_FALSE(inc.at("01001020300"));
  EXPECT_THROW(load_incomes(file("bad.csv", "GEOID,median_household_income\n01001020100,lots\n")), FormatError);
}

TEST_F(Geodata, BoundariesPolygonAndMultiPolygon) {
  const auto path = file("b.geojson", R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"GEOID10":"01001020100"},
     "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
    {"type":"Feature","properties":{"GEOID10":"01001020200"},
     "geometry":{"type":"MultiPolygon","coordinates":[[[[2,0],[3,0],[3,1],[2,1],[2,0]]],[[[5,5],[6,5],[6,6],[5,6],[5,5]]]]}}
  ]})");
  const auto b = load_boundaries(path);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1].polygons.size(), 2u);
  EXPECT_THROW(load_boundaries(path, "GEOID20"), FormatError);
}

TEST_F(Geodata, UnclosedRingNamesGeoid) {
  const auto path = file("b.geojson", R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"GEOID10":"48453000101"},
     "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}}]})");
  try {
    load_boundaries(path);
    FAIL();
  } catch (const GeometryError& e) {
    EXPECT_NE(std::string(e.what()).find("48453000101"), std::string::npos);
  }
}

TEST_F(Geodata, AssignmentDropsUnmatched) {
  std::vector<TractBoundary> bounds = {synth_square(0, 10)};  // (-170,-80) .. (-169,-79)
  std::vector<InstanceEmbedding> pts = {{"in", -79.5, -169.5, "x", {1}}, {"out", 0, 0, "x", {1}}};
  const auto a = assign_to_tracts(pts, bounds);
  EXPECT_EQ(*a.tract_of[0], bounds[0].tract_id);
  EXPECT_FALSE(a.tract_of[1]);
  EXPECT_EQ(a.unmatched, 1u);
  EXPECT_THROW(assign_to_tracts(pts, std::vector<TractBoundary>{}), ConfigError);
}

TEST_F(Geodata, BuildBagsGroupsInInputOrder) {
  std::vector<InstanceEmbedding> inst;
  for (int i = 0; i < 5; ++i) inst.push_back({"img" + std::to_string(i), 0, 0, i < 3 ? "A" : "B", {double(i)}});
  TractAssignment asg;
  asg.tract_of = {"T1000000001", "T2000000002", "T1000000001", "T2000000002", "T1000000001"};
  const std::map<std::string, int> labels = {{"T1000000001", 1}, {"T3000000003", 0}};
  const std::map<std::string, std::optional<double>> incomes = {{"T2000000002", 41000.0}};
  const auto set = build_bags(inst, asg, labels, &incomes);
  ASSERT_EQ(set.bags.size(), 2u);
  EXPECT_EQ(set.bags[0].tract_id, "T1000000001");
  EXPECT_EQ(set.bags[0].size(), 3u);
  EXPECT_EQ(set.bags[0].instances[1].image_id, "img2");
  EXPECT_EQ(set.bags[0].label, 1);
  EXPECT_EQ(set.bags[1].size(), 2u);
  EXPECT_FALSE(set.bags[1].label);  // images but no atlas row: inference only
  EXPECT_EQ(*set.bags[1].income, 41000.0);
  EXPECT_EQ(set.labeled_without_images, 1u);  // T3 has a label but no images
  EXPECT_EQ(warnings_.size(), 1u);
}

TEST_F(Geodata, IngestRoundTripsSyntheticFiles) {
  SynthConfig cfg;
  cfg.n_tracts = 40;
  cfg.m = 5;
  cfg.seed = 3;
  const auto ds = generate(cfg);
  const auto files = write_synth(ds, dir_);
  DataSources src;
  src.embeddings = files.embeddings;
  src.atlas = files.atlas;
  src.boundaries = files.boundaries;
  src.incomes = files.incomes;
  const auto data = ingest(src);
  ASSERT_EQ(data.bags.size(), ds.bags.size());
  for (std::size_t i = 0; i < ds.bags.size(); ++i) {
    EXPECT_EQ(data.bags[i].tract_id, ds.bags[i].tract_id);
    EXPECT_EQ(data.bags[i].label, ds.bags[i].label);
    EXPECT_EQ(data.bags[i].income, ds.bags[i].income);
    EXPECT_EQ(data.bags[i].city, ds.bags[i].city);
    ASSERT_EQ(data.bags[i].size(), ds.bags[i].size());
    for (std::size_t k = 0; k < ds.bags[i].size(); ++k) {
      EXPECT_EQ(data.bags[i].instances[k].features, ds.bags[i].instances[k].features);
    }
  }
  EXPECT_EQ(data.unmatched, 0u);
}

}  // namespace
}  // namespace foodmil
