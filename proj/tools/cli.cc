// Copyright 2026 The Pessim Authors.
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

#include "cli.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>

#include "CLI11.hpp"
#include "pessim/config.h"
#include "pessim/env.h"
#include "pessim/harness.h"
#include "pessim/losses.h"
#include "pessim/policy.h"
#include "pessim/reward_ensemble.h"
#include "pessim/serialize.h"
#include "pessim/trainer.h"

namespace pessim {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string>& Commands() {
  static const std::vector<std::string> kCommands = {
      "gen-world",   "sample-prefs",     "corrupt",      "train-ensemble",
      "attach-uncertainty", "fit-reference", "train-policy", "evaluate",
      "run-scenario", "sweep-temperature", "report"};
  return kCommands;
}

std::string Usage() {
  std::string text =
      "usage: pessim <command> [--config <path>] [--seed <u64>] "
      "[--out <dir>] [--quiet] [inputs]\n\ncommands:\n";
  for (const auto& c : Commands()) text += "  " + c + "\n";
  text +=
      "\ninputs: --world --prefs --ensemble --reference --policy --arms "
      "--temps, plus --split train|test and --arm <name|index>\n";
  return text;
}

struct Options {
  std::string command;
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out = "out";
  bool quiet = false;
  std::map<std::string, std::string> inputs;
  std::string split = "train";
  std::string arm;
  std::string label = "policy";
};

// Everything resolved before the command runs.
struct Run {
  Options options;
  ScenarioConfig scenario;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // rel path, text

  void Emit(const std::string& rel_path, std::string text) {
    outputs.emplace_back(rel_path, std::move(text));
  }
  const std::string& Input(const std::string& flag) const {
    auto it = options.inputs.find(flag);
    if (it == options.inputs.end() || it->second.empty()) {
      throw ConfigError("missing required input --" + flag);
    }
    return it->second;
  }
  bool HasInput(const std::string& flag) const {
    auto it = options.inputs.find(flag);
    return it != options.inputs.end() && !it->second.empty();
  }
  StageSeeds Seeds() const { return StageSeeds::FromBase(seed); }
};

World LoadWorld(const Run& run) {
  return WorldFromJson(Json::parse(ReadFile(run.Input("world"))));
}

PreferenceDataset LoadPrefs(const Run& run, const World& world,
                            const std::string& flag = "prefs") {
  PreferenceDataset d = DatasetFromJsonl(ReadFile(run.Input(flag)));
  d.world_seed = world.seed;
  ValidateDataset(d, world);
  return d;
}

SoftmaxPolicy LoadPolicy(const Run& run, const std::string& flag) {
  return PolicyFromJson(Json::parse(ReadFile(run.Input(flag))));
}

const std::string& SplitName(const Run& run) {
  if (run.options.split != "train" && run.options.split != "test") {
    throw ConfigError("--split must be train or test");
  }
  return run.options.split;
}

int ArmIndex(const Run& run) {
  const auto& arms = run.scenario.arms;
  const std::string& key = run.options.arm;
  if (key.empty()) return 0;
  for (size_t i = 0; i < arms.size(); ++i) {
    if (arms[i].name == key) return static_cast<int>(i);
  }
  if (std::all_of(key.begin(), key.end(), ::isdigit)) {
    const int idx = std::stoi(key);
    if (idx >= 0 && static_cast<size_t>(idx) < arms.size()) return idx;
  }
  throw ConfigError("unknown arm '" + key + "'");
}

// Per-seed intermediate artifacts, named like the stand-alone stage outputs.
void EmitSeedArtifacts(Run& run, const std::string& dir,
                       const SeedArtifacts& a, int seed_index,
                       double corruption_rate, uint64_t corrupt_seed) {
  Json info;
  info["seed_index"] = seed_index;
  info["base_seed"] = a.seeds.base;
  run.Emit(dir + "/seed.json", DumpJson(info));
  run.Emit(dir + "/world.json", DumpJson(WorldToJson(a.world)));
  run.Emit(dir + "/train_clean.jsonl", DatasetToJsonl(a.train_clean));
  run.Emit(dir + "/train_corrupted.jsonl",
           DatasetToJsonl(CorruptLabels(a.train_clean, corruption_rate,
                                        corrupt_seed)));
  run.Emit(dir + "/ensemble.json", DumpJson(EnsembleToJson(a.ensemble)));
  run.Emit(dir + "/train.jsonl", DatasetToJsonl(a.train));
  run.Emit(dir + "/test.jsonl", DatasetToJsonl(a.test));
  run.Emit(dir + "/reference.json", DumpJson(PolicyToJson(a.reference)));
}

std::string SeedDir(int seed_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seeds/seed_%03d", seed_index);
  return buf;
}

struct Summary {
  double mean = 0.0;
  double stderr_ = 0.0;
};

Summary Summarize(const std::vector<double>& values) {
  Summary s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v / n;
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stderr_ = std::sqrt(var / (n - 1.0) / n);
  }
  return s;
}

// Minimal reader for the harness CSVs: header plus comma-separated rows.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int Column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("missing column " + name);
    return static_cast<int>(it - header.begin());
  }
};

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Table ReadTable(const std::string& path) {
  Table t;
  std::istringstream in(ReadFile(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = SplitCsvLine(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else if (cells.size() != t.header.size()) {
      throw std::runtime_error(path + ": malformed row " +
                               std::to_string(line_no));
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.header.empty()) throw std::runtime_error(path + ": empty table");
  return t;
}

void CmdGenWorld(Run& run) {
  const auto& w = run.scenario.world;
  const World world = BuildWorld(run.Seeds().world, w.num_prompts,
                                 w.completions_per_prompt, w.feature_dim);
  run.Emit("world.json", DumpJson(WorldToJson(world)));
}

void CmdSamplePrefs(Run& run) {
  const World world = LoadWorld(run);
  const bool train = SplitName(run) == "train";
  const PreferenceDataset d = SamplePreferences(
      world, train ? run.scenario.data.train_pairs : run.scenario.data.test_pairs,
      train ? run.Seeds().train_pairs : run.Seeds().test_pairs);
  run.Emit(run.options.split + "_clean.jsonl", DatasetToJsonl(d));
}

void CmdCorrupt(Run& run) {
  const PreferenceDataset d = DatasetFromJsonl(ReadFile(run.Input("prefs")));
  run.Emit("train_corrupted.jsonl",
           DatasetToJsonl(CorruptLabels(d, run.scenario.data.corruption_rate,
                                        run.Seeds().corrupt)));
}

void CmdTrainEnsemble(Run& run) {
  const World world = LoadWorld(run);
  const PreferenceDataset d = LoadPrefs(run, world);
  EnsembleOptions options = run.scenario.ensemble;
  options.threads = DefaultThreads();
  const RewardEnsemble e = TrainEnsemble(world, d, options, run.Seeds().ensemble);
  run.Emit("ensemble.json", DumpJson(EnsembleToJson(e)));
}

void CmdAttachUncertainty(Run& run) {
  const World world = LoadWorld(run);
  const PreferenceDataset d = LoadPrefs(run, world);
  const RewardEnsemble e =
      EnsembleFromJson(Json::parse(ReadFile(run.Input("ensemble"))));
  run.Emit(SplitName(run) + ".jsonl",
           DatasetToJsonl(AttachUncertainties(d, e, world)));
}

void CmdFitReference(Run& run) {
  const World world = LoadWorld(run);
  const PreferenceDataset d = LoadPrefs(run, world);
  const SoftmaxPolicy ref = FitReferenceMle(
      world, d, run.scenario.reference.lr, run.scenario.reference.epochs);
  run.Emit("reference.json", DumpJson(PolicyToJson(ref)));
}

void CmdTrainPolicy(Run& run) {
  const ArmConfig& arm = run.scenario.arms[ArmIndex(run)];
  const World world = LoadWorld(run);
  const PreferenceDataset d = LoadPrefs(run, world);
  const SoftmaxPolicy ref = LoadPolicy(run, "reference");
  const TrainResult result =
      Train(ref, ref, world, d, arm.loss,
            BoundTrainConfig(arm.train, run.Seeds()));
  run.Emit("policy_" + arm.name + ".json", DumpJson(PolicyToJson(result.policy)));
  run.Emit("train_log_" + arm.name + ".csv", TrainLogCsv(result.log));
}

void CmdEvaluate(Run& run) {
  const World world = LoadWorld(run);
  const SoftmaxPolicy policy = LoadPolicy(run, "policy");
  const CompletionTable rewards = TrueRewardTable(world);
  Json doc;
  doc["true_reward"] = ExpectedValue(policy, rewards);
  if (run.HasInput("reference")) {
    doc["kl"] = MeanKlTo(policy, LoadPolicy(run, "reference"));
  }
  if (run.HasInput("prefs")) {
    const PreferenceDataset test = LoadPrefs(run, world);
    const auto prompts = SelectAmbiguous(test, run.scenario.ambiguous_k);
    doc["ambiguous_prompts"] = prompts;
    doc["ambiguous_reward"] = ExpectedValue(policy, rewards, prompts);
    if (run.HasInput("ensemble")) {
      const RewardEnsemble e =
          EnsembleFromJson(Json::parse(ReadFile(run.Input("ensemble"))));
      doc["ensemble_accuracy"] = EnsembleAccuracy(e, world, test);
      doc["bayes_accuracy"] = BayesOptimalAccuracy(world);
    }
  }
  run.Emit("evaluation.json", DumpJson(doc));
}

void CmdSweepTemperature(Run& run) {
  const World world = LoadWorld(run);
  const SoftmaxPolicy policy = LoadPolicy(run, "policy");
  const auto& grid = run.scenario.temperature_grid;
  const std::vector<double> rewards = TemperatureSweep(policy, world, grid);
  std::string csv = "arm,seed,temperature,reward\n";
  for (size_t i = 0; i < grid.size(); ++i) {
    csv += run.options.label + ",0," + FormatReal(grid[i]) + "," +
           FormatReal(rewards[i]) + "\n";
  }
  run.Emit("temps.csv", csv);
}

void CmdRunScenario(Run& run) {
  ScenarioConfig config = run.scenario;
  config.seed = run.seed;
  const ScenarioResult result = RunScenario(config, DefaultThreads());
  run.Emit("arms.csv", ArmsCsv(result));
  run.Emit("temps.csv", TempsCsv(result, config.temperature_grid));
  for (int s = 0; s < config.num_seeds; ++s) {
    const SeedArtifacts& a = result.seeds[s];
    EmitSeedArtifacts(run, SeedDir(s), a, s, config.data.corruption_rate,
                      a.seeds.corrupt);
  }
}

void CmdReport(Run& run) {
  const Table arms = ReadTable(run.Input("arms"));
  const int arm_col = arms.Column("arm");
  const std::vector<std::string> metrics = {"final_reward", "ambiguous_reward",
                                            "peak_drop", "kl"};
  std::vector<int> cols;
  for (const auto& m : metrics) cols.push_back(arms.Column(m));
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<double>>> values;
  for (const auto& row : arms.rows) {
    const std::string& arm = row[arm_col];
    if (!values.count(arm)) {
      order.push_back(arm);
      values[arm].resize(metrics.size());
    }
    for (size_t m = 0; m < metrics.size(); ++m) {
      values[arm][m].push_back(std::stod(row[cols[m]]));
    }
  }
  std::string csv = "arm,n";
  for (const auto& m : metrics) csv += "," + m + "_mean," + m + "_stderr";
  csv += "\n";
  for (const auto& arm : order) {
    csv += arm + "," + std::to_string(values[arm][0].size());
    for (size_t m = 0; m < metrics.size(); ++m) {
      const Summary s = Summarize(values[arm][m]);
      csv += "," + FormatReal(s.mean) + "," + FormatReal(s.stderr_);
    }
    csv += "\n";
  }
  run.Emit("summary.csv", csv);

  if (run.HasInput("temps")) {
    const Table temps = ReadTable(run.Input("temps"));
    const int a = temps.Column("arm");
    const int t = temps.Column("temperature");
    const int r = temps.Column("reward");
    std::vector<std::pair<std::string, std::string>> keys;
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const auto& row : temps.rows) {
      auto key = std::make_pair(row[a], row[t]);
      if (!groups.count(key)) keys.push_back(key);
      groups[key].push_back(std::stod(row[r]));
    }
    std::string out = "arm,temperature,n,reward_mean,reward_stderr\n";
    for (const auto& key : keys) {
      const Summary s = Summarize(groups[key]);
      out += key.first + "," + key.second + "," +
             std::to_string(groups[key].size()) + "," + FormatReal(s.mean) +
             "," + FormatReal(s.stderr_) + "\n";
    }
    run.Emit("temps_summary.csv", out);
  }
}

using Command = void (*)(Run&);

Command Lookup(const std::string& name) {
  static const std::map<std::string, Command> kTable = {
      {"gen-world", CmdGenWorld},
      {"sample-prefs", CmdSamplePrefs},
      {"corrupt", CmdCorrupt},
      {"train-ensemble", CmdTrainEnsemble},
      {"attach-uncertainty", CmdAttachUncertainty},
      {"fit-reference", CmdFitReference},
      {"train-policy", CmdTrainPolicy},
      {"evaluate", CmdEvaluate},
      {"run-scenario", CmdRunScenario},
      {"sweep-temperature", CmdSweepTemperature},
      {"report", CmdReport},
  };
  auto it = kTable.find(name);
  return it == kTable.end() ? nullptr : it->second;
}

const std::vector<std::string>& InputFlags() {
  static const std::vector<std::string> kFlags = {
      "world", "prefs", "ensemble", "reference", "policy", "arms", "temps"};
  return kFlags;
}

// Loads the config document (or a manifest of an earlier run) and fills in
// the scenario, seed and any inputs the command line left out.
void ResolveConfig(Run& run) {
  Options& o = run.options;
  std::optional<uint64_t> manifest_seed;
  Json scenario_doc = Json::object();
  if (!o.config_path.empty()) {
    if (!fs::exists(o.config_path)) {
      throw ConfigError("config file not found: " + o.config_path);
    }
    Json doc;
    try {
      doc = Json::parse(ReadFile(o.config_path));
    } catch (const Json::exception& e) {
      throw ConfigError("cannot parse config " + o.config_path + ": " +
                        e.what());
    }
    if (doc.is_object() && doc.value("kind", "") == "pessim-manifest") {
      if (doc.value("command", "") != o.command) {
        throw ConfigError("manifest " + o.config_path + " was written by '" +
                          doc.value("command", "") + "'");
      }
      scenario_doc = doc.at("config");
      manifest_seed = doc.at("seed").get<uint64_t>();
      for (const Json& input : doc.value("inputs", Json::array())) {
        const std::string flag = input.at("flag").get<std::string>();
        if (!o.inputs.count(flag) || o.inputs[flag].empty()) {
          o.inputs[flag] = input.at("path").get<std::string>();
        }
      }
      if (doc.contains("split")) o.split = doc.at("split").get<std::string>();
      if (doc.contains("arm") && o.arm.empty()) {
        o.arm = doc.at("arm").get<std::string>();
      }
    } else {
      scenario_doc = std::move(doc);
    }
  }
  try {
    run.scenario = ScenarioFromJson(scenario_doc);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  run.seed = o.seed ? *o.seed : manifest_seed ? *manifest_seed : run.scenario.seed;
  run.scenario.seed = run.seed;
  try {
    run.scenario.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

Json BuildManifest(const Run& run) {
  const Options& o = run.options;
  Json m;
  m["kind"] = "pessim-manifest";
  m["tool"] = "pessim";
  m["version"] = std::string(kToolVersion);
  m["command"] = o.command;
  m["seed"] = run.seed;
  if (o.command == "sample-prefs" || o.command == "attach-uncertainty") {
    m["split"] = o.split;
  }
  if (o.command == "train-policy") m["arm"] = o.arm;
  const Json config = ScenarioToJson(run.scenario);
  m["config_sha1"] = GitBlobHash(config.dump());
  m["config"] = config;
  Json inputs = Json::array();
  for (const auto& flag : InputFlags()) {
    auto it = o.inputs.find(flag);
    if (it == o.inputs.end() || it->second.empty()) continue;
    inputs.push_back({{"flag", flag},
                      {"path", it->second},
                      {"sha1", GitBlobHash(ReadFile(it->second))}});
  }
  m["inputs"] = std::move(inputs);
  Json outputs = Json::array();
  for (const auto& [path, text] : run.outputs) {
    outputs.push_back({{"path", path}, {"sha1", GitBlobHash(text)}});
  }
  m["outputs"] = std::move(outputs);
  return m;
}

}  // namespace

std::string GitBlobHash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size() + 1);  // trailing NUL
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  if (args.size() < 2) {
    err << Usage();
    return kExitConfigError;
  }
  if (args[1] == "--help" || args[1] == "-h" || args[1] == "help") {
    out << Usage();
    return kExitOk;
  }
  const Command command = Lookup(args[1]);
  if (command == nullptr) {
    err << "unknown command '" << args[1] << "'\n" << Usage();
    return kExitConfigError;
  }

  Run run;
  Options& o = run.options;
  o.command = args[1];
  CLI::App app{"pessim " + o.command, "pessim " + o.command};
  app.add_option("--config", o.config_path, "Config document or manifest");
  uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Top-level seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_flag("--quiet", o.quiet, "Suppress progress output");
  for (const auto& flag : InputFlags()) {
    app.add_option("--" + flag, o.inputs[flag], "Input file");
  }
  app.add_option("--split", o.split, "train or test");
  app.add_option("--arm", o.arm, "Arm name or index");
  app.add_option("--label", o.label, "Arm label for sweep-temperature");

  std::vector<std::string> rest(args.begin() + 2, args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "pessim " << o.command << ": " << e.what() << "\n" << Usage();
    return kExitConfigError;
  }
  if (seed_opt->count() > 0) o.seed = seed;

  try {
    ResolveConfig(run);
    command(run);
    for (const auto& [path, text] : run.outputs) {
      WriteFile(fs::path(o.out) / path, text);
    }
    WriteFile(fs::path(o.out) / "manifest.json", DumpJson(BuildManifest(run)));
  } catch (const ConfigError& e) {
    err << "pessim " << o.command << ": config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "pessim " << o.command << ": error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  if (!o.quiet) {
    out << "pessim " << o.command << ": wrote " << run.outputs.size() + 1
        << " files to " << o.out << "\n";
  }
  return kExitOk;
}

}  // namespace pessim
