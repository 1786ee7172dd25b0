// Copyright 2026 The tcvae Authors.
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

// The tcvae command line: prepare, train, generate, evaluate, compare, toy.
//
// Every setting resolves as flag > --config JSON > default; TCVAE_SEED
// replaces the default seed only. The resolved settings are written next to
// each command's outputs and can be passed back through --config to repeat
// the run. Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
// failure.

#pragma once

#include <glob.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcvae/data/checkpoint.hpp"
#include "tcvae/data/dataset.hpp"
#include "tcvae/data/toy.hpp"
#include "tcvae/eval/compare.hpp"
#include "tcvae/eval/report.hpp"
#include "tcvae/model/checkpoint.hpp"
#include "tcvae/sample/sampler.hpp"
#include "tcvae/train/trainer.hpp"

namespace tcvae::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kSeedEnv = "TCVAE_SEED";

struct Setting {
  std::string key;          // flag name without dashes, also the config key
  nlohmann::json fallback;  // default value; its JSON type is the setting's type
  std::string help;
  bool required = false;  // must resolve to a non-empty string
};

using Settings = std::vector<Setting>;

inline Settings training_settings() {
  return {{"seed", std::uint64_t{0}, "seed for initialization, shuffling and sampling"},
          {"lr", 1e-3, "initial learning rate"},
          {"weight-decay", 0.9, "decoupled weight decay"},
          {"max-epochs", std::uint64_t{500}, "epoch budget (cosine horizon)"},
          {"patience", std::uint64_t{25}, "epochs without improvement before stopping"},
          {"min-delta", 1e-3, "smallest validation improvement that resets patience"},
          {"stop-reference", "previous", "early-stopping reference: previous or best"},
          {"early-stop", true, "enable early stopping"},
          {"batch-size", std::uint64_t{0}, "minibatch size (0: chosen from validation size)"},
          {"d", std::uint64_t{4}, "token width"},
          {"tcl-hidden", std::uint64_t{96}, "TCL hidden tokens"},
          {"tcl-latent", std::uint64_t{32}, "TCL latent tokens"},
          {"linear-hidden", std::uint64_t{512}, "Base hidden width"},
          {"linear-latent", std::uint64_t{256}, "Base latent width"}};
}

inline Settings command_settings(const std::string& command) {
  if (command == "prepare") {
    return {{"data", "", "input CSV", true},
            {"schema", "", "schema sidecar JSON (kinds are inferred when omitted)"},
            {"out", "", "dataset directory", true},
            {"test-frac", 0.2, "test fraction"},
            {"val-frac", 0.15, "validation fraction of the non-test rows"},
            {"seed", std::uint64_t{0}, "split seed (the schema's seed when not given)"}};
  }
  if (command == "train") {
    Settings s = {{"dataset", "", "dataset directory from prepare", true},
                  {"model", "tcf", "variant: base, tc, tf, tcf, tcf-enc, tcf-dec"},
                  {"out", "", "model directory", true}};
    for (Setting& t : training_settings()) s.push_back(std::move(t));
    return s;
  }
  if (command == "generate") {
    return {{"model", "", "model directory from train", true},
            {"n", std::uint64_t{0}, "rows to sample (0: training-split size)"},
            {"seed", std::uint64_t{0}, "sampling seed"},
            {"condition", "", "fixed class label, or 'majority'"},
            {"sample-categories", false, "draw categories from the softmax instead of argmax"},
            {"out", "", "output CSV (metadata goes to the .json next to it)", true}};
  }
  if (command == "evaluate") {
    return {{"real", "", "dataset directory from prepare", true},
            {"synth", "", "synthetic CSV", true},
            {"out", "", "report JSON", true},
            {"dataset-name", "", "dataset name in the report (default: real directory name)"},
            {"model-name", "", "model name in the report (default: from the CSV's sidecar)"}};
  }
  if (command == "compare") {
    return {{"reports", "", "glob of report JSON files (comma-separated globs allowed)", true},
            {"rope", kRope, "region of practical equivalence"},
            {"draws", std::uint64_t{50000}, "Monte Carlo draws of the Bayes sign test"},
            {"seed", std::uint64_t{0}, "Bayes sign test seed"},
            {"size-bins", std::uint64_t{5}, "dataset-size and feature-size groups"},
            {"out", "", "output directory", true}};
  }
  if (command == "toy") {
    Settings s = {{"name", "circles", "toy shape: circles, sin, blobs, xor"},
                  {"n", std::uint64_t{20000}, "rows"},
                  {"radius", 1.0, "toy scale r"},
                  {"model", "tcf", "variant trained unless --train-all-models"},
                  {"train-all-models", false, "train all six variants"},
                  {"test-frac", 0.2, "test fraction"},
                  {"val-frac", 0.15, "validation fraction of the non-test rows"},
                  {"out", "", "output directory", true}};
    for (Setting& t : training_settings()) {
      if (t.key == "early-stop") t.fallback = false;
      s.push_back(std::move(t));
    }
    return s;
  }
  throw UsageError("unknown command '" + command + "'");
}

inline const std::vector<std::pair<std::string, std::string>>& commands() {
  static const std::vector<std::pair<std::string, std::string>> list = {
      {"prepare", "split and preprocess a CSV into a dataset directory"},
      {"train", "train one model variant on a prepared dataset"},
      {"generate", "sample a synthetic CSV from a trained model"},
      {"evaluate", "score a synthetic CSV against the real dataset"},
      {"compare", "signed-rank, Bayes sign and rank tables over many reports"},
      {"toy", "generate a 2-D toy dataset and train, sample and evaluate on it"}};
  return list;
}

// Resolved settings of one invocation.
struct Config {
  std::string command;
  nlohmann::json values = nlohmann::json::object();
  std::set<std::string> explicit_keys;  // set by a flag, the config file or the environment

  std::string str(const std::string& k) const { return values.at(k).get<std::string>(); }
  double num(const std::string& k) const { return values.at(k).get<double>(); }
  std::uint64_t count(const std::string& k) const { return values.at(k).get<std::uint64_t>(); }
  bool flag(const std::string& k) const { return values.at(k).get<bool>(); }

  nlohmann::json record() const {
    nlohmann::json j = values;
    j["command"] = command;
    return j;
  }
};

inline std::uint64_t parse_count(const std::string& key, std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError("--" + key + " expects a nonnegative integer, got '" + std::string(text) +
                     "'");
  }
  return v;
}

// Converts a flag's text to the setting's type.
inline nlohmann::json typed_value(const Setting& s, const std::string& text) {
  if (s.fallback.is_string()) return text;
  if (s.fallback.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw UsageError("--" + s.key + " expects true or false, got '" + text + "'");
  }
  if (s.fallback.is_number_integer()) return parse_count(s.key, text);
  const auto v = parse_number(text);
  if (!v) throw UsageError("--" + s.key + " expects a number, got '" + text + "'");
  return *v;
}

// Checks a config-file value against the setting's type.
inline nlohmann::json checked_value(const Setting& s, const nlohmann::json& v) {
  const bool ok = s.fallback.is_string()           ? v.is_string()
                  : s.fallback.is_boolean()        ? v.is_boolean()
                  : s.fallback.is_number_integer() ? (v.is_number_integer() && v.get<double>() >= 0)
                                                   : v.is_number();
  if (!ok) throw UsageError("config value for '" + s.key + "' has the wrong type: " + v.dump());
  if (s.fallback.is_number_integer()) return v.get<std::uint64_t>();
  if (s.fallback.is_number_float()) return v.get<double>();
  return v;
}

// flag > config file > environment seed > default.
inline Config resolve(const std::string& command, const Settings& settings,
                      const std::map<std::string, std::string>& flags,
                      const std::string& config_path) {
  Config c;
  c.command = command;
  for (const Setting& s : settings) c.values[s.key] = s.fallback;
  if (const char* env = std::getenv(kSeedEnv); env != nullptr && c.values.contains("seed")) {
    c.values["seed"] = parse_count(kSeedEnv, env);
    c.explicit_keys.insert("seed");
  }
  if (!config_path.empty()) {
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config '" + config_path + "': " + e.what());
    }
    if (!file.is_object()) throw UsageError("config '" + config_path + "' is not a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (key == "command") {
        if (value != command) {
          throw UsageError("config was written by '" + value.dump() + "', not '" + command + "'");
        }
        continue;
      }
      const auto it = std::find_if(settings.begin(), settings.end(),
                                   [&](const Setting& s) { return s.key == key; });
      if (it == settings.end()) throw UsageError("unknown config key '" + key + "'");
      c.values[key] = checked_value(*it, value);
      c.explicit_keys.insert(key);
    }
  }
  for (const auto& [key, text] : flags) {
    const auto it = std::find_if(settings.begin(), settings.end(),
                                 [&](const Setting& s) { return s.key == key; });
    c.values[key] = typed_value(*it, text);
    c.explicit_keys.insert(key);
  }
  for (const Setting& s : settings) {
    if (s.required && c.str(s.key).empty()) throw UsageError("--" + s.key + " is required");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Shared steps

inline std::filesystem::path sidecar(const std::filesystem::path& file, const std::string& suffix) {
  std::filesystem::path p = file;
  p.replace_extension(suffix);
  return p;
}

inline void write_config(const std::filesystem::path& path, const Config& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_json(path, c.record());
}

inline TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.seed = c.count("seed");
  t.lr_init = c.num("lr");
  t.weight_decay = c.num("weight-decay");
  t.max_epochs = c.count("max-epochs");
  t.patience_limit = c.count("patience");
  t.min_delta = c.num("min-delta");
  const std::string ref = c.str("stop-reference");
  if (ref == "previous") {
    t.stop_reference = EarlyStopper::Reference::kPrevious;
  } else if (ref == "best") {
    t.stop_reference = EarlyStopper::Reference::kBest;
  } else {
    throw UsageError("--stop-reference must be 'previous' or 'best'");
  }
  t.early_stopping = c.flag("early-stop");
  t.batch_size = c.count("batch-size");
  return t;
}

inline ModelSpec model_spec(const Config& c, Variant variant, const FeatureSchema& schema) {
  ModelSpec s;
  s.variant = variant;
  s.layout = FeatureLayout::from_schema(schema);
  s.d = c.count("d");
  s.tcl_hidden = c.count("tcl-hidden");
  s.tcl_latent = c.count("tcl-latent");
  s.linear_hidden = c.count("linear-hidden");
  s.linear_latent = c.count("linear-latent");
  s.validate();
  return s;
}

inline Variant variant_arg(const std::string& name) {
  try {
    return parse_variant(name);
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
}

inline void format_epoch(std::ostream& out, const std::string& tag, const EpochRecord& r) {
  std::ostringstream line;
  line << tag << " epoch " << r.epoch << " train " << std::setprecision(6) << r.train_loss
       << " val " << r.val_loss << " lr " << r.lr << " patience " << r.patience << '\n';
  out << line.str();
}

// Trains one variant on a prepared dataset and writes a self-contained model
// directory: the checkpoint, the preprocessing needed to decode samples, the
// class prior, the JSON-lines log and a summary.
inline void train_into(const Dataset& data, Variant variant, const Config& c,
                       const std::filesystem::path& dir, std::ostream& out) {
  const ModelSpec spec = model_spec(c, variant, data.schema());
  const TrainConfig tc = train_config(c);
  Vae model(spec, tc.seed);
  const EncodedTable train_rows = data.part(data.split.train);
  const EncodedTable val_rows = data.part(data.split.val);
  const TrainResult r = train(model, train_rows, val_rows, tc, [&](const EpochRecord& e) {
    format_epoch(out, variant_name(variant), e);
  });
  save_model(dir, model, {r.rng_state, r.steps});
  write_json(dir / "schema.json", to_json(data.schema()));
  write_json(dir / "transforms.json", data.preprocessor.to_json());
  const ClassPrior prior = ClassPrior::from_labels(train_rows.labels, data.schema().num_classes());
  write_json(dir / "prior.json", {{"probs", prior.probs}, {"train_rows", train_rows.rows}});
  write_file((dir / "log.jsonl").string(), r.log.jsonl());
  const EpochRecord& last = r.log.epochs.back();
  write_json(dir / "summary.json", {{"variant", variant_name(variant)},
                                    {"display_name", variant_display_name(variant)},
                                    {"param_count", count_params(spec)},
                                    {"epochs", last.epoch},
                                    {"early_stopped", r.log.early_stopped},
                                    {"final_train_loss", last.train_loss},
                                    {"final_val_loss", last.val_loss},
                                    {"batch_size", r.log.batch_size},
                                    {"steps", r.steps}});
  out << variant_name(variant) << ": " << count_params(spec) << " parameters, " << last.epoch
      << " epochs\n";
}

struct TrainedModel {
  std::unique_ptr<Vae> model;
  Preprocessor preprocessor;
  ClassPrior prior;
  std::size_t train_rows = 0;
};

inline TrainedModel load_trained(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("'" + dir.string() + "' is not a model directory");
  }
  TrainedModel t;
  t.model = load_model(dir);
  const FeatureSchema schema = feature_schema_from_json(read_json(dir / "schema.json"));
  t.preprocessor = Preprocessor::from_json(schema, read_json(dir / "transforms.json"));
  const nlohmann::json prior = read_json(dir / "prior.json");
  t.prior.probs = prior.at("probs").get<std::vector<double>>();
  t.train_rows = prior.at("train_rows").get<std::size_t>();
  return t;
}

inline std::optional<std::size_t> condition_index(const TrainedModel& t, const std::string& label) {
  if (label.empty()) return std::nullopt;
  if (label == "majority") {
    return static_cast<std::size_t>(std::max_element(t.prior.probs.begin(), t.prior.probs.end()) -
                                    t.prior.probs.begin());
  }
  const auto& classes = t.preprocessor.schema().target().categories;
  const auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw UsageError("--condition '" + label + "' is not a class");
  return static_cast<std::size_t>(it - classes.begin());
}

inline SyntheticTable generate_from(const TrainedModel& t, std::size_t n, std::uint64_t seed,
                                    const std::string& condition, bool sample_categories) {
  SampleOptions o;
  o.n = n ? n : t.train_rows;
  o.seed = seed;
  o.condition = condition_index(t, condition);
  o.sample_categories = sample_categories;
  return sample(*t.model, t.preprocessor, t.prior, o, variant_name(t.model->spec().variant));
}

// Reads a CSV with the dataset's column kinds; extra columns are ignored.
inline Table read_synthetic(const std::filesystem::path& csv, const FeatureSchema& schema) {
  const RawTable raw = read_csv(csv.string());
  std::vector<ColumnKind> kinds;
  for (const std::string& name : raw.header) {
    const auto it = std::find_if(schema.columns.begin(), schema.columns.end(),
                                 [&](const ColumnSchema& c) { return c.name == name; });
    kinds.push_back(it == schema.columns.end() ? ColumnKind::kCategorical : it->kind);
  }
  return make_table(raw, kinds);
}

inline EvalReport evaluate_with(const Dataset& real, const Table& synth, std::string dataset_name,
                                std::string model_name) {
  EvalOptions o;
  o.metadata = {{"dataset", std::move(dataset_name)},
                {"model", std::move(model_name)},
                {"rows", real.rows()},
                {"features", real.schema().num_features()}};
  return evaluate(real, synth, o);
}

// ---------------------------------------------------------------------------
// Commands

inline void cmd_prepare(const Config& c, std::ostream& out) {
  const LoadedCsv loaded = load_csv(c.str("data"), c.str("schema"));
  const std::uint64_t seed =
      c.explicit_keys.count("seed") || !loaded.seed ? c.count("seed") : *loaded.seed;
  const Split split =
      make_split(target_indices(loaded.table), c.num("test-frac"), c.num("val-frac"), seed);
  const Dataset d = preprocess(loaded.table, split);
  const std::filesystem::path dir = c.str("out");
  save_dataset(dir, d);
  Config record = c;
  record.values["seed"] = seed;
  write_config(dir / "config.json", record);
  out << "prepared " << d.rows() << " rows (train " << split.train.size() << ", val "
      << split.val.size() << ", test " << split.test.size() << ") into " << dir.string() << '\n';
}

inline void cmd_train(const Config& c, std::ostream& out) {
  const Variant variant = variant_arg(c.str("model"));
  const Dataset d = load_dataset(c.str("dataset"));
  const std::filesystem::path dir = c.str("out");
  train_into(d, variant, c, dir, out);
  write_config(dir / "config.json", c);
}

inline void cmd_generate(const Config& c, std::ostream& out) {
  const TrainedModel t = load_trained(c.str("model"));
  const SyntheticTable s = generate_from(t, c.count("n"), c.count("seed"), c.str("condition"),
                                         c.flag("sample-categories"));
  const std::filesystem::path csv = c.str("out");
  write_synthetic(csv, s);
  write_config(sidecar(csv, ".config.json"), c);
  out << "wrote " << s.table.rows() << " rows to " << csv.string() << '\n';
}

inline void cmd_evaluate(const Config& c, std::ostream& out) {
  const std::filesystem::path real_dir = c.str("real");
  const std::filesystem::path synth_csv = c.str("synth");
  const Dataset real = load_dataset(real_dir);
  std::string dataset_name = c.str("dataset-name");
  if (dataset_name.empty()) {
    const std::filesystem::path normal = real_dir.lexically_normal();
    dataset_name = normal.has_filename() ? normal.filename().string()
                                         : normal.parent_path().filename().string();
  }
  std::string model_name = c.str("model-name");
  if (model_name.empty()) {
    const auto meta = sidecar(synth_csv, ".json");
    model_name = std::filesystem::exists(meta) ? read_json(meta).value("model", "")
                                               : synth_csv.stem().string();
  }
  const EvalReport r =
      evaluate_with(real, read_synthetic(synth_csv, real.schema()), dataset_name, model_name);
  const std::filesystem::path report = c.str("out");
  if (report.has_parent_path()) std::filesystem::create_directories(report.parent_path());
  write_json(report, r.to_json());
  write_config(sidecar(report, ".config.json"), c);
  const nlohmann::json scores = r.to_json().at("scores");
  for (const auto& [name, value] : scores.items()) out << name << ' ' << value.dump() << '\n';
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"one_way_marginals", "pairwise_correlation",
                                                 "alpha_precision",   "beta_recall",
                                                 "utility",           "fidelity"};
  return names;
}

inline std::vector<std::filesystem::path> expand_globs(const std::string& patterns) {
  std::set<std::string> found;
  std::stringstream list(patterns);
  std::string pattern;
  while (std::getline(list, pattern, ',')) {
    if (pattern.empty()) continue;
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    if (rc == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) found.insert(g.gl_pathv[i]);
    }
    ::globfree(&g);
    if (rc != 0 && rc != GLOB_NOMATCH) throw DataError("cannot expand '" + pattern + "'");
  }
  std::vector<std::filesystem::path> out;
  for (const std::string& p : found) {
    if (p.ends_with(".config.json")) continue;
    out.emplace_back(p);
  }
  return out;
}

// Edges splitting `values` into `bins` groups of roughly equal count.
inline std::vector<double> equal_count_edges(std::vector<double> values, std::size_t bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  for (std::size_t k = 1; k < bins && k < values.size(); ++k) {
    const double e = values[k * values.size() / bins];
    if (e > values.front() && (edges.empty() || e > edges.back())) edges.push_back(e);
  }
  return edges;
}

inline std::vector<std::string> bin_labels(const std::vector<double>& edges) {
  std::vector<std::string> labels;
  if (edges.empty()) return {size_bin(0.0, edges)};
  labels.push_back(size_bin(edges.front() - 1.0, edges));
  for (double e : edges) labels.push_back(size_bin(e, edges));
  return labels;
}

inline void cmd_compare(const Config& c, std::ostream& out) {
  struct Entry {
    double rows = 0.0, features = 0.0;
    std::map<std::string, nlohmann::json> scores;  // model -> scores
  };
  std::map<std::string, Entry> datasets;
  std::set<std::string> model_set;
  const auto files = expand_globs(c.str("reports"));
  if (files.empty()) throw DataError("no reports match '" + c.str("reports") + "'");
  for (const auto& f : files) {
    const nlohmann::json j = read_json(f);
    if (!j.contains("scores") || !j.contains("metadata")) {
      throw DataError("'" + f.string() + "' is not an evaluation report");
    }
    const auto& meta = j.at("metadata");
    const std::string dataset = meta.at("dataset").get<std::string>();
    const std::string model = meta.at("model").get<std::string>();
    Entry& e = datasets[dataset];
    if (e.scores.count(model)) {
      throw DataError("two reports for model '" + model + "' on dataset '" + dataset + "'");
    }
    e.rows = meta.at("rows").get<double>();
    e.features = meta.at("features").get<double>();
    e.scores[model] = j.at("scores");
    model_set.insert(model);
  }
  const std::vector<std::string> models(model_set.begin(), model_set.end());
  if (models.size() < 2) throw DataError("comparison needs reports from at least two models");

  nlohmann::json result = {{"rope", c.num("rope")},
                           {"models", models},
                           {"datasets", nlohmann::json::array()},
                           {"metrics", nlohmann::json::object()}};
  for (const auto& [name, e] : datasets) result["datasets"].push_back(name);
  for (const std::string& metric : metric_names()) {
    nlohmann::json pairs = nlohmann::json::array();
    for (std::size_t a = 0; a < models.size(); ++a) {
      for (std::size_t b = a + 1; b < models.size(); ++b) {
        std::vector<double> sa, sb;
        for (const auto& [name, e] : datasets) {
          if (e.scores.count(models[a]) && e.scores.count(models[b])) {
            sa.push_back(e.scores.at(models[a]).at(metric).get<double>());
            sb.push_back(e.scores.at(models[b]).at(metric).get<double>());
          }
        }
        nlohmann::json p = {{"a", models[a]}, {"b", models[b]}, {"n", sa.size()}};
        p["wilcoxon"] = sa.size() >= 5 ? to_json(wilcoxon_signed_rank(sa, sb)) : nlohmann::json();
        p["bayes_sign"] =
            to_json(bayes_sign_test(sa, sb, c.num("rope"), c.count("draws"), c.count("seed")));
        pairs.push_back(std::move(p));
      }
    }
    result["metrics"][metric] = std::move(pairs);
  }
  const std::filesystem::path dir = c.str("out");
  std::filesystem::create_directories(dir);
  write_json(dir / "comparison.json", result);

  // Average-rank tables over datasets with a report for every model.
  std::vector<std::string> complete;
  for (const auto& [name, e] : datasets) {
    if (e.scores.size() == models.size()) complete.push_back(name);
  }
  if (complete.size() < datasets.size()) {
    warn(std::to_string(datasets.size() - complete.size()) +
         " dataset(s) lack a report for some model and are left out of the rank tables");
  }
  for (const std::string partition : {"rows", "features"}) {
    std::vector<double> sizes;
    for (const auto& name : complete) {
      sizes.push_back(partition == "rows" ? datasets[name].rows : datasets[name].features);
    }
    const std::vector<double> edges = equal_count_edges(sizes, c.count("size-bins"));
    RawTable table;
    table.header = {"metric", "bin"};
    table.header.insert(table.header.end(), models.begin(), models.end());
    std::map<std::string, std::vector<double>> average;
    std::map<std::string, std::size_t> average_n;
    const auto emit = [&](const std::string& metric,
                          const std::map<std::string, std::vector<double>>& ranks) {
      for (const std::string& bin : bin_labels(edges)) {
        const auto it = ranks.find(bin);
        if (it == ranks.end()) continue;
        std::vector<std::string> row = {metric, bin};
        for (double v : it->second) row.push_back(format_number(v));
        table.rows.push_back(std::move(row));
      }
    };
    for (const std::string& metric : metric_names()) {
      std::vector<DatasetScores> scored;
      for (std::size_t i = 0; i < complete.size(); ++i) {
        DatasetScores s{size_bin(sizes[i], edges), {}};
        for (const std::string& m : models) {
          s.scores.push_back(datasets[complete[i]].scores.at(m).at(metric).get<double>());
        }
        scored.push_back(std::move(s));
      }
      if (scored.empty()) continue;
      const auto ranks = rank_by_group(scored);
      emit(metric, ranks);
      for (const auto& [bin, r] : ranks) {
        auto& acc = average[bin];
        acc.resize(models.size(), 0.0);
        for (std::size_t m = 0; m < models.size(); ++m) acc[m] += r[m];
        ++average_n[bin];
      }
    }
    for (auto& [bin, acc] : average) {
      for (double& v : acc) v /= static_cast<double>(average_n[bin]);
    }
    emit("average", average);
    write_file((dir / ("ranks_by_" + partition + ".csv")).string(), to_csv(table));
  }
  write_config(dir / "config.json", c);
  out << "compared " << models.size() << " models over " << datasets.size() << " datasets into "
      << dir.string() << '\n';
}

// Share of class-`cls` rows inside (or outside) the circle of radius `r`.
inline double radial_share(const Table& t, const std::string& cls, double r, bool inside) {
  const auto& x = t.column("x1").numbers;
  const auto& y = t.column("x2").numbers;
  const auto& labels = t.column("class").labels;
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != cls) continue;
    ++total;
    const bool in = x[i] * x[i] + y[i] * y[i] < r * r;
    hits += in == inside;
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

inline void cmd_toy(const Config& c, std::ostream& out) {
  const std::filesystem::path dir = c.str("out");
  const std::string name = c.str("name");
  if (std::find(toy_names().begin(), toy_names().end(), name) == toy_names().end()) {
    throw UsageError("unknown toy dataset '" + name + "'");
  }
  const Table table = toy_generate(name, c.count("n"), c.count("seed"), c.num("radius"));
  std::filesystem::create_directories(dir);
  write_file((dir / "data.csv").string(), to_csv(table.to_raw()));
  const Dataset d = preprocess(table, make_split(target_indices(table), c.num("test-frac"),
                                                 c.num("val-frac"), c.count("seed")));
  save_dataset(dir / "dataset", d);

  std::vector<Variant> variants;
  if (c.flag("train-all-models")) {
    variants.assign(kAllVariants.begin(), kAllVariants.end());
  } else {
    variants.push_back(variant_arg(c.str("model")));
  }
  nlohmann::json summary = {
      {"dataset", name}, {"n", c.count("n")}, {"models", nlohmann::json::object()}};
  for (Variant v : variants) {
    const std::filesystem::path model_dir = dir / variant_name(v);
    train_into(d, v, c, model_dir, out);
    const TrainedModel t = load_trained(model_dir);
    const SyntheticTable s = generate_from(t, 0, c.count("seed"), "", false);
    write_synthetic(model_dir / "samples.csv", s);
    const EvalReport r = evaluate_with(d, s.table, name, variant_name(v));
    write_json(model_dir / "report.json", r.to_json());
    nlohmann::json entry = {{"scores", r.to_json().at("scores")}};
    if (name == "circles") {
      const double radius = c.num("radius");
      entry["class0_inside_r"] = radial_share(s.table, "0", radius, true);
      entry["class3_outside_3r"] = radial_share(s.table, "3", 3.0 * radius, false);
    }
    summary["models"][variant_name(v)] = std::move(entry);
  }
  write_json(dir / "summary.json", summary);
  write_config(dir / "config.json", c);
}

inline void dispatch(const Config& c, std::ostream& out) {
  if (c.command == "prepare") return cmd_prepare(c, out);
  if (c.command == "train") return cmd_train(c, out);
  if (c.command == "generate") return cmd_generate(c, out);
  if (c.command == "evaluate") return cmd_evaluate(c, out);
  if (c.command == "compare") return cmd_compare(c, out);
  if (c.command == "toy") return cmd_toy(c, out);
  throw UsageError("unknown command '" + c.command + "'");
}

// Parses `args` (without the program name) and runs the command.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tabular VAE synthesis: prepare, train, generate, evaluate, compare, toy"};
  app.name("tcvae");
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> flags;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, Settings> settings;
  for (const auto& [command, description] : commands()) {
    CLI::App* sub = app.add_subcommand(command, description);
    settings[command] = command_settings(command);
    sub->add_option("--config", config_paths[command], "JSON file of settings");
    for (const Setting& s : settings[command]) {
      auto& given = flags[command];
      if (s.fallback.is_boolean()) {
        sub->add_flag_callback(
            "--" + s.key, [&given, key = s.key] { given[key] = "true"; }, s.help);
        sub->add_flag_callback(
            "--no-" + s.key, [&given, key = s.key] { given[key] = "false"; }, "disable --" + s.key);
      } else {
        std::string help =
            s.help + " [" +
            (s.fallback.is_string() ? s.fallback.get<std::string>() : s.fallback.dump()) + "]";
        sub->add_option_function<std::string>(
            "--" + s.key, [&given, key = s.key](const std::string& v) { given[key] = v; }, help);
      }
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const Config c = resolve(command, settings[command], flags[command], config_paths[command]);
    dispatch(c, out);
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractViolation& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace tcvae::cli
