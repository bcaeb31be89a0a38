#include "nl2sql/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "nl2sql/datagen.hpp"
#include "nl2sql/error.hpp"
#include "nl2sql/eval.hpp"
#include "nl2sql/models.hpp"
#include "nl2sql/training.hpp"

namespace nl2sql::cli {

using nlohmann::json;

namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Every configuration key and its default.
constexpr KeyDefault kDefaults[] = {
    {"data", ""},
    {"tables", ""},
    {"out", ""},
    {"seed", "0"},
    {"num_tables", "200"},
    {"per_table", "6"},
    {"split", "70/10/20"},
    {"model", "seq2sql"},
    {"emb_dim", "32"},
    {"hidden", "32"},
    {"layers", "2"},
    {"dropout", "0.3"},
    {"max_decode_len", "64"},
    {"beam", "5"},
    {"feed_pointed_state", "true"},
    {"embeddings", ""},
    {"lr", "0.003"},
    {"epochs", "300"},
    {"patience", "10"},
    {"batch_size", "16"},
    {"clip", "true"},
    {"clip_norm", "5"},
    {"reward_baseline", ""},
    {"rl", "false"},
    {"from_checkpoint", ""},
    {"checkpoint", "model.ckpt"},
    {"log", ""},
    {"eval_split", "dev"},
    {"predictions", ""},
    {"score", ""},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& d : kDefaults) values_[d.key] = d.value;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& d : kDefaults) out.emplace_back(d.key);
    return out;
  }();
  return k;
}

bool RunConfig::known(const std::string& key) {
  const auto& k = keys();
  return std::find(k.begin(), k.end(), key) != k.end();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::vector<std::string> problems;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (eq == std::string::npos) {
      problems.push_back(where + ": expected key = value");
      continue;
    }
    const std::string key = trim(t.substr(0, eq));
    if (!known(key)) {
      problems.push_back(where + ": unknown key '" + key + "'");
      continue;
    }
    values_[key] = trim(t.substr(eq + 1));
  }
  if (!problems.empty()) throw ConfigError(join(problems, "; "));
}

long long RunConfig::get_int(const std::string& key, std::vector<std::string>& problems) const {
  const std::string& v = get(key);
  long long x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) {
    problems.push_back(key + " must be an integer (got '" + v + "')");
    return 0;
  }
  return x;
}

double RunConfig::get_double(const std::string& key, std::vector<std::string>& problems) const {
  const std::string& v = get(key);
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) {
    problems.push_back(key + " must be a number (got '" + v + "')");
    return 0.0;
  }
  return x;
}

bool RunConfig::get_bool(const std::string& key, std::vector<std::string>& problems) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  problems.push_back(key + " must be true or false (got '" + v + "')");
  return false;
}

std::string RunConfig::to_json() const {
  json j = json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j.dump();
}

namespace {

int exit_code_for(const Error& e) {
  static const std::vector<std::string> config = {"ConfigError"};
  static const std::vector<std::string> numeric = {"NonFiniteValue", "ShapeMismatch", "NonScalarLoss",
                                                   "LengthMismatch", "EmptySequence"};
  if (std::find(config.begin(), config.end(), e.kind()) != config.end()) return kConfigError;
  if (std::find(numeric.begin(), numeric.end(), e.kind()) != numeric.end()) return kNumericError;
  return kDataError;
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message,
                  const std::vector<std::string>& problems = {}) {
  json j = {{"error", kind}, {"message", message}};
  if (!problems.empty()) j["problems"] = problems;
  err << j.dump() << '\n';
}

void require(const RunConfig& cfg, const std::string& key, std::vector<std::string>& problems) {
  if (cfg.get(key).empty()) problems.push_back(key + " is required");
}

void fail_if(const std::vector<std::string>& problems) {
  if (!problems.empty()) throw ConfigError(join(problems, "; "));
}

SplitRatio parse_ratio(const std::string& s, std::vector<std::string>& problems) {
  std::vector<double> parts;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto slash = s.find('/', start);
    const std::string piece = s.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
    char* end = nullptr;
    const double x = std::strtod(piece.c_str(), &end);
    if (piece.empty() || end != piece.c_str() + piece.size() || x < 0) {
      problems.push_back("split must look like 70/10/20 (got '" + s + "')");
      return {};
    }
    parts.push_back(x);
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  if (parts.size() != 3 || parts[0] + parts[1] + parts[2] <= 0) {
    problems.push_back("split must have three parts with a positive sum (got '" + s + "')");
    return {};
  }
  return {parts[0], parts[1], parts[2]};
}

std::vector<Table> tables_for(const RunConfig& cfg) {
  if (!cfg.get("tables").empty()) return load_tables(cfg.get("tables"));
  if (!cfg.get("data").empty()) return load_tables(tables_path(cfg.get("data")));
  throw ConfigError("one of data or tables is required");
}

const Table& find_table(const std::vector<Table>& tables, const std::string& id) {
  for (const auto& t : tables) {
    if (t.id == id) return t;
  }
  throw UnknownTable("unknown table '" + id + "'");
}

// --- commands ----------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<std::string> problems;
  require(cfg, "out", problems);
  const auto seed = cfg.get_int("seed", problems);
  const auto per_table = cfg.get_int("per_table", problems);
  const auto num_tables = cfg.get_int("num_tables", problems);
  const auto ratio = parse_ratio(cfg.get("split"), problems);
  if (per_table <= 0) problems.push_back("per_table must be positive");
  if (cfg.get("tables").empty() && num_tables <= 0) problems.push_back("num_tables must be positive");
  fail_if(problems);

  const std::vector<Table> raw = cfg.get("tables").empty()
                                     ? synthesize_tables(static_cast<std::size_t>(num_tables),
                                                         static_cast<std::uint64_t>(seed))
                                     : load_tables(cfg.get("tables"));
  auto kept = filter_tables(raw);
  err << "kept " << kept.size() << " of " << raw.size() << " tables after filtering\n";
  const Dataset d = build_dataset(std::move(kept), static_cast<std::size_t>(per_table), ratio,
                                  static_cast<std::uint64_t>(seed));
  const std::filesystem::path dir = cfg.get("out");
  save_dataset(dir, d);
  const json stats = dataset_stats(d);
  std::ofstream(dir / "stats.json") << stats.dump(2) << '\n';
  out << stats.dump() << '\n';
  return kOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<std::string> problems;
  require(cfg, "data", problems);
  require(cfg, "checkpoint", problems);
  ModelConfig mc;
  try {
    mc.kind = model_kind_from_string(cfg.get("model"));
  } catch (const ConfigError& e) {
    problems.push_back(e.what());
  }
  auto positive = [&](const char* key) {
    const auto v = cfg.get_int(key, problems);
    if (v <= 0) problems.push_back(std::string(key) + " must be positive");
    return static_cast<std::size_t>(std::max(v, 1LL));
  };
  mc.emb_dim = positive("emb_dim");
  mc.hidden = positive("hidden");
  mc.layers = positive("layers");
  mc.max_decode_len = positive("max_decode_len");
  mc.beam = positive("beam");
  mc.dropout = cfg.get_double("dropout", problems);
  if (mc.dropout < 0.0 || mc.dropout >= 1.0) problems.push_back("dropout must be in [0, 1)");
  mc.feed_pointed_state = cfg.get_bool("feed_pointed_state", problems);

  TrainConfig tc;
  tc.lr = cfg.get_double("lr", problems);
  tc.max_epochs = positive("epochs");
  const auto patience = cfg.get_int("patience", problems);
  if (patience < 0) problems.push_back("patience must be non-negative");
  tc.patience = static_cast<std::size_t>(std::max(patience, 0LL));
  tc.batch_size = positive("batch_size");
  tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", problems));
  tc.clip = cfg.get_bool("clip", problems);
  tc.clip_norm = cfg.get_double("clip_norm", problems);
  if (!cfg.get("reward_baseline").empty()) {
    tc.use_baseline = true;
    tc.baseline = cfg.get_double("reward_baseline", problems);
  }
  const bool rl = cfg.get_bool("rl", problems);
  tc.phase = rl ? Phase::RL : Phase::Supervised;
  if (rl && cfg.get("from_checkpoint").empty()) problems.push_back("rl requires from_checkpoint");
  if (rl && mc.kind != ModelKind::Seq2Sql) problems.push_back("rl is only supported for model seq2sql");
  try {
    tc.validate();
  } catch (const ConfigError& e) {
    problems.push_back(e.what());
  }
  fail_if(problems);
  err << json{{"config", json::parse(cfg.to_json())}}.dump() << '\n';

  const Dataset d = load_dataset(cfg.get("data"));
  std::unique_ptr<Model> model;
  if (!cfg.get("from_checkpoint").empty()) {
    model = load_checkpoint(cfg.get("from_checkpoint")).model;
    if (rl && model->kind() != ModelKind::Seq2Sql) throw ConfigError("rl needs a seq2sql checkpoint");
  } else {
    model = Model::create(mc, build_vocabulary(d.train, d), build_target_vocabulary(d.train, d), tc.seed);
    if (!cfg.get("embeddings").empty()) {
      Embeddings emb{&model->params().get("enc.emb"), mc.emb_dim};
      const auto found = emb.load_vectors(cfg.get("embeddings"), model->vocab());
      err << "loaded " << found << " pretrained vectors\n";
    }
  }

  std::ofstream log;
  if (!cfg.get("log").empty()) {
    log.open(cfg.get("log"), std::ios::trunc);
    if (!log) throw IoError("cannot write log '" + cfg.get("log") + "'");
  }
  const auto result = train(*model, d.train, d.dev, d, tc, [&](const EpochLog& e) {
    const std::string line = e.to_json().dump();
    err << line << '\n';
    if (log) log << line << '\n' << std::flush;
  });
  const json extra = {{"train", tc.to_json()},
                      {"best_epoch", result.best_epoch},
                      {"best_dev_acc_ex", result.best_dev_acc_ex},
                      {"best_dev_acc_lf", result.best_dev_acc_lf}};
  save_checkpoint(cfg.get("checkpoint"), *model, extra);
  json summary = extra;
  summary["checkpoint"] = cfg.get("checkpoint");
  summary["epochs"] = result.log.size();
  summary["model"] = std::string(to_string(model->kind()));
  out << summary.dump() << '\n';
  return kOk;
}

// Predictions in the format eval writes, one JSON object per example.
std::vector<Prediction> read_predictions(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions '" + path.string() + "'");
  std::vector<Prediction> preds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": " + e.what(), lineno);
    }
    Prediction p;
    const json& q = j.at("pred");
    if (q.contains("error")) {
      p.error = q.at("error").get<std::string>();
    } else {
      p.query = query_from_json(q);
      p.agg = p.query->agg;
      p.sel = p.query->select;
    }
    const std::size_t i = preds.size();
    if (i < examples.size() && j.value("table_id", examples[i].table_id) != examples[i].table_id) {
      throw FormatError(path.string() + ": prediction for table '" + j.value("table_id", "") + "' but example " +
                            std::to_string(i) + " is on '" + examples[i].table_id + "'",
                        lineno);
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<std::string> problems;
  const bool scoring = !cfg.get("score").empty();
  if (!scoring) require(cfg, "checkpoint", problems);
  require(cfg, "data", problems);
  Split split = Split::Dev;
  const auto& name = cfg.get("eval_split");
  if (name == "train") {
    split = Split::Train;
  } else if (name == "test") {
    split = Split::Test;
  } else if (name != "dev") {
    problems.push_back("split must be train, dev or test (got '" + name + "')");
  }
  fail_if(problems);
  const Dataset d = load_dataset(cfg.get("data"));
  const auto& examples = d.split(split);
  std::vector<Prediction> preds;
  std::string model_name = "predictions";
  if (scoring) {
    preds = read_predictions(cfg.get("score"), examples);
  } else {
    const auto ckpt = load_checkpoint(cfg.get("checkpoint"));
    preds = predict_all(*ckpt.model, examples, d);
    model_name = std::string(to_string(ckpt.model->kind()));
  }
  const auto report = evaluate(preds, examples, d);
  if (!cfg.get("predictions").empty()) {
    std::ofstream p(cfg.get("predictions"), std::ios::trunc);
    if (!p) throw IoError("cannot write predictions '" + cfg.get("predictions") + "'");
    for (std::size_t i = 0; i < preds.size(); ++i) p << prediction_to_json(preds[i], examples[i]).dump() << '\n';
  }
  err << "evaluated " << report.n << " " << name << " examples\n";
  json j = report.to_json(true);
  j["split"] = name;
  j["model"] = model_name;
  out << j.dump() << '\n';
  return kOk;
}

int cmd_exec(const RunConfig& cfg, const std::string& table_id, const std::string& query, std::ostream& out) {
  const auto tables = tables_for(cfg);
  const Table& t = find_table(tables, table_id);
  const Query q = parse_query(query, t.header);
  out << exec_result_to_json(execute(q, t)).dump() << '\n';
  return kOk;
}

int cmd_predict(const RunConfig& cfg, const std::string& table_id, const std::string& question, std::ostream& out) {
  std::vector<std::string> problems;
  require(cfg, "checkpoint", problems);
  if (question.empty()) problems.push_back("question is required");
  fail_if(problems);
  const auto ckpt = load_checkpoint(cfg.get("checkpoint"));
  const auto tables = tables_for(cfg);
  const Table& t = find_table(tables, table_id);
  Example e;
  e.table_id = t.id;
  e.question_raw = question;
  e.question = tokenize(question);
  const Prediction p = ckpt.model->predict(ckpt.model->prepare(e, t));
  json j = {{"table_id", t.id},
            {"question", question},
            {"pred", p.query ? query_to_json(*p.query) : json{{"error", "structure"}}},
            {"sql", p.query ? json(serialize_query(*p.query, t.header)) : json(nullptr)},
            {"tokens", p.tokens}};
  out << j.dump() << '\n';
  return kOk;
}

int cmd_stats(const RunConfig& cfg, std::ostream& out) {
  std::vector<std::string> problems;
  require(cfg, "data", problems);
  fail_if(problems);
  out << dataset_stats(load_dataset(cfg.get("data"))).dump() << '\n';
  return kOk;
}

struct Binding {
  std::string key;
  CLI::Option* option;
  std::string value;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Natural-language-to-SQL lab: data generation, training, evaluation"};
  app.require_subcommand(1, 1);
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file (default: $NL2SQL_CONFIG)");

  // Flags per subcommand; each binds to a config key of the same name with
  // dashes, except where noted.
  std::vector<std::unique_ptr<Binding>> bindings;
  auto bind = [&](CLI::App* sub, const std::string& key, const std::string& flag = "") {
    auto b = std::make_unique<Binding>();
    b->key = key;
    std::string name = flag;
    if (name.empty()) {
      name = "--" + key;
      std::replace(name.begin(), name.end(), '_', '-');
    }
    b->option = sub->add_option(name, b->value, "config key " + key);
    bindings.push_back(std::move(b));
  };

  auto* gen = app.add_subcommand("gen-data", "generate a dataset from tables (synthetic if none given)");
  for (const char* k : {"tables", "out", "seed", "num_tables", "per_table", "split"}) bind(gen, k);

  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  for (const char* k : {"data", "model", "emb_dim", "hidden", "layers", "dropout", "max_decode_len", "beam",
                        "feed_pointed_state", "embeddings", "lr", "patience", "batch_size", "seed", "clip",
                        "clip_norm", "reward_baseline", "from_checkpoint", "checkpoint", "log"}) {
    bind(tr, k);
  }
  bind(tr, "epochs");
  bool rl_flag = false;
  tr->add_flag("--rl", rl_flag, "continue from --from-checkpoint with policy-gradient training");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  for (const char* k : {"checkpoint", "data", "predictions", "score"}) bind(ev, k);
  bind(ev, "eval_split", "--split");

  std::string table_id, query, question;
  auto* ex = app.add_subcommand("exec", "execute a SQL query against a table");
  for (const char* k : {"data", "tables"}) bind(ex, k);
  ex->add_option("--table", table_id, "table id")->required();
  ex->add_option("--query", query, "query text")->required();

  auto* pr = app.add_subcommand("predict", "predict the query for a question");
  for (const char* k : {"checkpoint", "data", "tables"}) bind(pr, k);
  pr->add_option("--table", table_id, "table id")->required();
  pr->add_option("--question", question, "question text")->required();

  auto* st = app.add_subcommand("stats", "dataset statistics");
  bind(st, "data");

  for (auto* sub : {gen, tr, ev, ex, pr, st}) {
    sub->add_option("--config", config_path, "key=value config file (default: $NL2SQL_CONFIG)");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "ConfigError", e.what());
    return kConfigError;
  }

  try {
    RunConfig cfg;
    if (config_path.empty()) {
      if (const char* env = std::getenv(std::string(kConfigEnvVar).c_str()); env && *env) config_path = env;
    }
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& b : bindings) {
      if (b->option->count() > 0) cfg.set(b->key, b->value);
    }
    if (rl_flag) cfg.set("rl", "true");

    if (gen->parsed()) return cmd_gen_data(cfg, out, err);
    if (tr->parsed()) return cmd_train(cfg, out, err);
    if (ev->parsed()) return cmd_eval(cfg, out, err);
    if (ex->parsed()) return cmd_exec(cfg, table_id, query, out);
    if (pr->parsed()) return cmd_predict(cfg, table_id, question, out);
    if (st->parsed()) return cmd_stats(cfg, out);
  } catch (const ValidationError& e) {
    report_error(err, e.kind(), e.what(), e.problems());
    return kDataError;
  } catch (const Error& e) {
    report_error(err, e.kind(), e.what());
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    report_error(err, "FormatError", e.what());
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error(err, "IoError", e.what());
    return kDataError;
  }
  return kConfigError;
}

}  // namespace nl2sql::cli
