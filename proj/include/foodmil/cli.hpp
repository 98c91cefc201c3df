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

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "foodmil/checkpoint.hpp"
#include "foodmil/error.hpp"
#include "foodmil/geodata.hpp"
#include "foodmil/interpret.hpp"
#include "foodmil/manifest.hpp"
#include "foodmil/metrics.hpp"
#include "foodmil/split.hpp"
#include "foodmil/synth.hpp"
#include "foodmil/trainer.hpp"

namespace foodmil::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string num(double v) { return nlohmann::json(v).dump(); }

/// Resolved option list for a run manifest: every option with its effective
/// value, in a fixed order, so replaying the list reproduces the run.
struct Resolved {
  std::vector<std::string> args;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> inputs;

  void value(const std::string& name, const std::string& v, nlohmann::json as_json) {
    args.push_back("--" + name);
    args.push_back(v);
    config[name] = std::move(as_json);
  }
  void text(const std::string& name, const std::string& v) { value(name, v, v); }
  void real(const std::string& name, double v) { value(name, num(v), v); }
  void count(const std::string& name, std::uint64_t v) { value(name, std::to_string(v), v); }
  void flag(const std::string& name, bool on) {
    if (on) args.push_back("--" + name);
    config[name] = on;
  }
  void input(const std::string& name, const std::string& path) {
    if (path.empty()) return;
    text(name, path);
    inputs.push_back(path);
  }
  void list(const std::string& name, const std::vector<std::string>& vs) {
    args.push_back("--" + name);
    args.insert(args.end(), vs.begin(), vs.end());
    config[name] = vs;
  }
};

inline void write_manifest(const std::string& subcommand, const Resolved& r, std::uint64_t seed,
                           const std::string& path) {
  RunManifest m;
  m.subcommand = subcommand;
  m.args = r.args;
  m.config = r.config;
  m.seed = seed;
  for (const auto& in : r.inputs) m.inputs[in] = file_sha256(in);
  save_manifest(m, path);
}

inline void add_data_options(CLI::App* sub, DataSources& src) {
  sub->add_option("--embeddings", src.embeddings, "Newline-delimited JSON embeddings file")->required();
  sub->add_option("--atlas", src.atlas, "Food access atlas CSV")->required();
  sub->add_option("--boundaries", src.boundaries, "Tract boundary GeoJSON")->required();
  sub->add_option("--incomes", src.incomes, "Median household income CSV");
  sub->add_option("--geoid-property", src.geoid_property, "GeoJSON property holding the GEOID")
      ->capture_default_str();
  sub->add_option("--tract-column", src.atlas_options.tract_column, "Atlas tract id column")->capture_default_str();
  sub->add_option_function<std::vector<std::string>>(
         "--flag-columns",
         [&src](const std::vector<std::string>& v) {
           std::copy(v.begin(), v.end(), src.atlas_options.flag_columns.begin());
         },
         "The four atlas flag columns")
      ->expected(4);
}

inline void resolve_data(Resolved& r, const DataSources& src) {
  r.input("embeddings", src.embeddings);
  r.input("atlas", src.atlas);
  r.input("boundaries", src.boundaries);
  r.input("incomes", src.incomes);
  r.text("geoid-property", src.geoid_property);
  r.text("tract-column", src.atlas_options.tract_column);
  r.list("flag-columns", {src.atlas_options.flag_columns.begin(), src.atlas_options.flag_columns.end()});
}

struct TrainOptions {
  TrainConfig cfg;
  std::string pos_weight = "auto";
};

inline void add_train_options(CLI::App* sub, TrainOptions& o) {
  auto& c = o.cfg;
  sub->add_option("--learning-rate", c.learning_rate)->capture_default_str();
  sub->add_option("--weight-decay", c.weight_decay)->capture_default_str();
  sub->add_option("--dropout", c.dropout_rate)->capture_default_str();
  sub->add_option("--batch-size", c.batch_size)->capture_default_str();
  sub->add_option("--label-smoothing", c.label_smoothing)->capture_default_str();
  sub->add_option("--epochs", c.max_epochs, "Maximum number of epochs")->capture_default_str();
  sub->add_option("--patience", c.patience)->capture_default_str();
  sub->add_option("--pos-weight", o.pos_weight, "auto, or an explicit positive weight")->capture_default_str();
  sub->add_option("--l-dim", c.l_dim, "Attention hidden dimension")->capture_default_str();
  sub->add_option("--threshold", c.threshold)->capture_default_str();
  sub->add_flag("--use-income", c.use_income, "Late fusion with normalised income");
  sub->add_flag("--freeze-income-weight", c.freeze_income_weight, "Keep the income weight at 0");
  sub->add_flag("--mean-pool", c.mean_pool, "Freeze V = U = 0 (mean pooling ablation)");
}

inline void finish_train_options(TrainOptions& o) {
  if (o.pos_weight == "auto") {
    o.cfg.pos_weight.reset();
  } else {
    const auto v = foodmil::detail::parse_double(o.pos_weight);
    if (!v || !(*v > 0.0)) throw ConfigError("--pos-weight must be 'auto' or a positive number");
    o.cfg.pos_weight = *v;
  }
  o.cfg.validate();
}

inline void resolve_train(Resolved& r, const TrainOptions& o) {
  const auto& c = o.cfg;
  r.real("learning-rate", c.learning_rate);
  r.real("weight-decay", c.weight_decay);
  r.real("dropout", c.dropout_rate);
  r.count("batch-size", c.batch_size);
  r.real("label-smoothing", c.label_smoothing);
  r.count("epochs", c.max_epochs);
  r.count("patience", c.patience);
  r.text("pos-weight", c.pos_weight ? num(*c.pos_weight) : "auto");
  r.count("l-dim", c.l_dim);
  r.real("threshold", c.threshold);
  r.flag("use-income", c.use_income);
  r.flag("freeze-income-weight", c.freeze_income_weight);
  r.flag("mean-pool", c.mean_pool);
  r.count("seed", c.seed);
}

inline std::vector<TractBag> partition_bags(const std::vector<TractBag>& bags, const std::string& split_path,
                                            const std::string& partition, bool labeled_only) {
  std::vector<TractBag> out;
  if (split_path.empty() || partition == "all") {
    for (const auto& b : bags) {
      if (!labeled_only || b.label) out.push_back(b);
    }
    return out;
  }
  const SplitPlan plan = load_split(split_path);
  if (partition == "train") return select_bags(bags, plan.train);
  if (partition == "validation") return select_bags(bags, plan.validation);
  return select_bags(bags, plan.test);
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline nlohmann::json report_json(const EvalReport& r, const std::string& partition, double threshold) {
  auto j = to_json(r);
  j["partition"] = partition;
  j["threshold"] = threshold;
  return j;
}

}  // namespace detail

/// Parses and runs one command line. Returns the process exit code: 0 on
/// success, 1 on data or validation errors, 2 on usage errors.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Census-tract food insecurity from bags of street-view image embeddings", "foodmil"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads for bag-parallel sections")->capture_default_str();

  // synth
  SynthConfig scfg;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic planted-witness dataset");
  synth->add_option("--out-dir", synth_dir)->required();
  synth->add_option("--n-tracts", scfg.n_tracts)->capture_default_str();
  synth->add_option("--k-min", scfg.k_min)->capture_default_str();
  synth->add_option("--k-max", scfg.k_max)->capture_default_str();
  synth->add_option("--m", scfg.m, "Embedding dimension")->capture_default_str();
  synth->add_option("--positive-rate", scfg.positive_rate)->capture_default_str();
  synth->add_option("--witness-rate", scfg.witness_rate)->capture_default_str();
  synth->add_option("--separation", scfg.separation)->capture_default_str();
  synth->add_option("--noise-std", scfg.noise_std)->capture_default_str();
  synth->add_option("--n-cities", scfg.n_cities)->capture_default_str();
  synth->add_option("--seed", scfg.seed)->capture_default_str();

  // prepare
  DataSources prep_src;
  std::string prep_method = "stratified", prep_city, prep_out;
  std::vector<double> prep_ratios = {0.6, 0.2, 0.2};
  double prep_val_fraction = 0.1;
  std::uint64_t prep_seed = 0;
  auto* prepare = app.add_subcommand("prepare", "Ingest inputs and write a split plan");
  add_data_options(prepare, prep_src);
  prepare->add_option("--method", prep_method)->check(CLI::IsMember({"stratified", "city-holdout"}))
      ->capture_default_str();
  prepare->add_option("--city", prep_city, "City held out as test (city-holdout)");
  prepare->add_option("--ratios", prep_ratios, "Train/validation/test ratios")->expected(3);
  prepare->add_option("--val-fraction", prep_val_fraction)->capture_default_str();
  prepare->add_option("--seed", prep_seed)->capture_default_str();
  prepare->add_option("--out", prep_out, "Split plan output path")->required();

  // train
  DataSources train_src;
  TrainOptions topt;
  std::string train_split, train_out, train_history;
  auto* train_cmd = app.add_subcommand("train", "Train a gated-attention model");
  add_data_options(train_cmd, train_src);
  add_train_options(train_cmd, topt);
  train_cmd->add_option("--seed", topt.cfg.seed)->capture_default_str();
  train_cmd->add_option("--split", train_split)->required();
  train_cmd->add_option("--out", train_out, "Checkpoint output path")->required();
  train_cmd->add_option("--history", train_history, "Per-epoch history output path");

  // eval
  DataSources eval_src;
  std::string eval_ckpt, eval_split, eval_partition = "test", eval_out;
  double eval_threshold = 0.5;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_data_options(eval, eval_src);
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--split", eval_split);
  eval->add_option("--partition", eval_partition)
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();
  eval->add_option("--threshold", eval_threshold)->capture_default_str();
  eval->add_option("--out", eval_out, "Report output path");

  // attention
  DataSources attn_src;
  std::string attn_ckpt, attn_split, attn_partition = "all", attn_out;
  std::size_t attn_top_k = 0;
  auto* attention = app.add_subcommand("attention", "Dump per-image attention weights");
  add_data_options(attention, attn_src);
  attention->add_option("--checkpoint", attn_ckpt)->required();
  attention->add_option("--split", attn_split);
  attention->add_option("--partition", attn_partition)
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();
  attention->add_option("--top-k", attn_top_k, "Records per tract (0 = all)")->capture_default_str();
  attention->add_option("--out", attn_out, "CSV output path")->required();

  // map
  DataSources map_src;
  std::string map_ckpt, map_split, map_partition = "all", map_out;
  double map_threshold = 0.5;
  auto* map = app.add_subcommand("map", "Write a GeoJSON prediction map");
  add_data_options(map, map_src);
  map->add_option("--checkpoint", map_ckpt)->required();
  map->add_option("--split", map_split);
  map->add_option("--partition", map_partition)
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();
  map->add_option("--threshold", map_threshold)->capture_default_str();
  map->add_option("--out", map_out, "GeoJSON output path")->required();

  // holdout-city
  DataSources hold_src;
  TrainOptions hopt;
  std::string hold_city, hold_dir;
  double hold_val_fraction = 0.1;
  auto* holdout = app.add_subcommand("holdout-city", "Leave one city out: split, train, evaluate");
  add_data_options(holdout, hold_src);
  add_train_options(holdout, hopt);
  holdout->add_option("--seed", hopt.cfg.seed)->capture_default_str();
  holdout->add_option("--city", hold_city)->required();
  holdout->add_option("--val-fraction", hold_val_fraction)->capture_default_str();
  holdout->add_option("--out-dir", hold_dir)->required();

  // replay
  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
  replay->add_option("manifest", replay_path)->required();

  if (argv.size() <= 1) {
    err << app.help();
    return kExitUsage;
  }
  std::vector<const char*> cargs;
  for (const auto& a : argv) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  if (threads < 1) threads = 1;

  try {
    if (synth->parsed()) {
      const auto ds = generate(scfg);
      const auto files = write_synth(ds, synth_dir);
      Resolved r;
      r.text("out-dir", synth_dir);
      r.count("n-tracts", scfg.n_tracts);
      r.count("k-min", scfg.k_min);
      r.count("k-max", scfg.k_max);
      r.count("m", scfg.m);
      r.real("positive-rate", scfg.positive_rate);
      r.real("witness-rate", scfg.witness_rate);
      r.real("separation", scfg.separation);
      r.real("noise-std", scfg.noise_std);
      r.count("n-cities", scfg.n_cities);
      r.count("seed", scfg.seed);
      write_manifest("synth", r, scfg.seed, (std::filesystem::path(synth_dir) / "synth.manifest.json").string());
      std::size_t images = 0;
      for (const auto& b : ds.bags) images += b.size();
      out << "wrote " << ds.bags.size() << " tracts, " << images << " images to " << synth_dir << '\n';
      return kExitOk;
    }

    if (prepare->parsed()) {
      const Dataset data = ingest(prep_src, threads);
      SplitPlan plan;
      if (prep_method == "stratified") {
        if (prep_ratios.size() != 3) throw ConfigError("--ratios needs three values");
        plan = stratified_split(data.bags, {prep_ratios[0], prep_ratios[1], prep_ratios[2]}, prep_seed);
      } else {
        if (prep_city.empty()) throw ConfigError("--city is required for city-holdout");
        plan = holdout_city_split(data.bags, prep_city, prep_val_fraction, prep_seed);
      }
      save_split(plan, prep_out);
      Resolved r;
      resolve_data(r, prep_src);
      r.text("method", prep_method);
      if (!prep_city.empty()) r.text("city", prep_city);
      r.list("ratios", {num(prep_ratios[0]), num(prep_ratios[1]), num(prep_ratios[2])});
      r.real("val-fraction", prep_val_fraction);
      r.count("seed", prep_seed);
      r.text("out", prep_out);
      write_manifest("prepare", r, prep_seed, prep_out + ".manifest.json");
      out << "tracts: " << data.bags.size() << " (images " << data.images << ", unmatched " << data.unmatched
          << ")\nsplit: train " << plan.train.size() << ", validation " << plan.validation.size() << ", test "
          << plan.test.size() << '\n';
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      finish_train_options(topt);
      const Dataset data = ingest(train_src, threads);
      const SplitPlan plan = load_split(train_split);
      const TrainResult res = train(data.bags, plan, topt.cfg, threads);
      save_checkpoint(train_out, res.model, topt.cfg);
      if (!train_history.empty()) write_json(train_history, to_json(res.history));
      Resolved r;
      resolve_data(r, train_src);
      resolve_train(r, topt);
      r.input("split", train_split);
      r.text("out", train_out);
      if (!train_history.empty()) r.text("history", train_history);
      write_manifest("train", r, topt.cfg.seed, train_out + ".manifest.json");
      const auto& best = res.history[res.best_epoch - 1];
      out << "epochs: " << res.history.size() << ", best epoch " << res.best_epoch << " (val accuracy "
          << best.val_accuracy << ", val macro F1 " << best.val_macro_f1 << ")\n";
      return kExitOk;
    }

    if (eval->parsed()) {
      const Dataset data = ingest(eval_src, threads);
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const auto bags = partition_bags(data.bags, eval_split, eval_partition, true);
      const EvalReport rep = evaluate(ck.model, bags, eval_threshold, threads);
      const auto j = report_json(rep, eval_split.empty() ? "all" : eval_partition, eval_threshold);
      out << j.dump(2) << '\n';
      if (!eval_out.empty()) {
        write_json(eval_out, j);
        Resolved r;
        resolve_data(r, eval_src);
        r.input("checkpoint", eval_ckpt);
        r.input("split", eval_split);
        r.text("partition", eval_partition);
        r.real("threshold", eval_threshold);
        r.text("out", eval_out);
        write_manifest("eval", r, 0, eval_out + ".manifest.json");
      }
      return kExitOk;
    }

    if (attention->parsed()) {
      const Dataset data = ingest(attn_src, threads);
      const Checkpoint ck = load_checkpoint(attn_ckpt);
      const auto bags = partition_bags(data.bags, attn_split, attn_partition, false);
      const auto recs = dump_attention(ck.model, bags,
                                       attn_top_k ? std::optional<std::size_t>(attn_top_k) : std::nullopt, threads);
      write_attention_csv(attn_out, recs);
      Resolved r;
      resolve_data(r, attn_src);
      r.input("checkpoint", attn_ckpt);
      r.input("split", attn_split);
      r.text("partition", attn_partition);
      r.count("top-k", attn_top_k);
      r.text("out", attn_out);
      write_manifest("attention", r, 0, attn_out + ".manifest.json");
      out << "wrote " << recs.size() << " attention records to " << attn_out << '\n';
      return kExitOk;
    }

    if (map->parsed()) {
      const Dataset data = ingest(map_src, threads);
      const Checkpoint ck = load_checkpoint(map_ckpt);
      const auto bags = partition_bags(data.bags, map_split, map_partition, false);
      const MapSummary s = emit_prediction_map(ck.model, bags, data.boundaries, map_out, map_threshold);
      Resolved r;
      resolve_data(r, map_src);
      r.input("checkpoint", map_ckpt);
      r.input("split", map_split);
      r.text("partition", map_partition);
      r.real("threshold", map_threshold);
      r.text("out", map_out);
      write_manifest("map", r, 0, map_out + ".manifest.json");
      out << "wrote " << s.features << " features to " << map_out << " (" << s.skipped << " skipped)\n";
      return kExitOk;
    }

    if (holdout->parsed()) {
      finish_train_options(hopt);
      const Dataset data = ingest(hold_src, threads);
      const SplitPlan plan = holdout_city_split(data.bags, hold_city, hold_val_fraction, hopt.cfg.seed);
      const TrainResult res = train(data.bags, plan, hopt.cfg, threads);
      const auto test_bags = select_bags(data.bags, plan.test);
      const EvalReport rep = evaluate(res.model, test_bags, hopt.cfg.threshold, threads);

      const std::filesystem::path dir(hold_dir);
      std::filesystem::create_directories(dir);
      save_split(plan, (dir / "split.json").string());
      save_checkpoint((dir / "checkpoint.json").string(), res.model, hopt.cfg);
      write_json((dir / "history.json").string(), to_json(res.history));
      const auto j = report_json(rep, "test", hopt.cfg.threshold);
      write_json((dir / "report.json").string(), j);
      Resolved r;
      resolve_data(r, hold_src);
      resolve_train(r, hopt);
      r.text("city", hold_city);
      r.real("val-fraction", hold_val_fraction);
      r.text("out-dir", hold_dir);
      write_manifest("holdout-city", r, hopt.cfg.seed, (dir / "holdout.manifest.json").string());
      out << j.dump(2) << '\n';
      return kExitOk;
    }

    if (replay->parsed()) {
      const RunManifest m = load_manifest(replay_path);
      for (const auto& [path, digest] : m.inputs) {
        if (file_sha256(path) != digest) throw Error("input " + path + " changed since the manifest was written");
      }
      std::vector<std::string> args = {argv.front(), "--threads", std::to_string(threads), m.subcommand};
      args.insert(args.end(), m.args.begin(), m.args.end());
      return run(args, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace foodmil::cli
