#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nl2sql/cli.hpp"
#include "nl2sql/datagen.hpp"
#include "nl2sql/models.hpp"
#include "support/fixtures.hpp"

using namespace nl2sql;
using nl2sql::fx::TempDir;
using nlohmann::json;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  Invocation r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// Sets, or clears when empty, an environment variable until scope exit.
class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) {
    if (const char* old = std::getenv(name)) old_ = old;
    if (value.empty()) {
      unsetenv(name);
    } else {
      setenv(name, value.c_str(), 1);
    }
  }
  ~ScopedEnv() {
    if (old_) {
      setenv(name_, old_->c_str(), 1);
    } else {
      unsetenv(name_);
    }
  }

 private:
  const char* name_;
  std::optional<std::string> old_;
};

const std::string kEnv(cli::kConfigEnvVar);

// A small generated dataset and a one-epoch seq2sql checkpoint shared by the
// tests below.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    ScopedEnv env(kEnv.c_str(), "");
    const auto gen = invoke({"gen-data", "--out", data(), "--num-tables", "12", "--seed", "3"});
    ASSERT_EQ(gen.code, 0) << gen.err;
    const auto tr = invoke({"train", "--data", data(), "--model", "seq2sql", "--emb-dim", "8", "--hidden", "8",
                           "--epochs", "1", "--checkpoint", checkpoint(), "--log", (*dir_ / "train.log").string()});
    ASSERT_EQ(tr.code, 0) << tr.err;
    train_run_ = new Invocation(tr);
  }
  static void TearDownTestSuite() {
    delete train_run_;
    delete dir_;
  }

  static std::string data() { return (*dir_ / "data").string(); }
  static std::string checkpoint() { return (*dir_ / "model.ckpt").string(); }

  static TempDir* dir_;
  static Invocation* train_run_;
};

TempDir* CliTest::dir_ = nullptr;
Invocation* CliTest::train_run_ = nullptr;

}  // namespace

TEST(Cli, GenDataIsByteReproducible) {
  ScopedEnv env(kEnv.c_str(), "");
  TempDir dir("cli");
  const auto a = invoke({"gen-data", "--out", (dir / "a").string(), "--num-tables", "15", "--seed", "7"});
  const auto b = invoke({"gen-data", "--out", (dir / "b").string(), "--num-tables", "15", "--seed", "7"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename();
    EXPECT_EQ(fx::read_file(entry.path()), fx::read_file(dir / "b" / name)) << name;
    ++files;
  }
  EXPECT_GE(files, 4u);
  const auto stats = json::parse(a.out);
  EXPECT_TRUE(stats.is_object());
}

TEST(Cli, MissingTableFileIsDataError) {
  ScopedEnv env(kEnv.c_str(), "");
  TempDir dir("cli");
  const std::string missing = (dir / "no_such_tables.jsonl").string();
  const auto r = invoke({"gen-data", "--tables", missing, "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  const auto err = json::parse(lines_of(r.err).back());
  EXPECT_EQ(err["error"], "IoError");
}

TEST(Cli, RlWithoutCheckpointIsConfigError) {
  ScopedEnv env(kEnv.c_str(), "");
  TempDir dir("cli");
  const auto r = invoke({"train", "--data", dir.path().string(), "--rl"});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("from_checkpoint"), std::string::npos);
}

TEST(Cli, ConfigProblemsAreListedTogether) {
  ScopedEnv env(kEnv.c_str(), "");
  const auto r = invoke({"train", "--data", "x", "--lr", "abc", "--epochs", "0", "--model", "transformer"});
  EXPECT_EQ(r.code, cli::kConfigError);
  const auto err = json::parse(lines_of(r.err).back());
  const std::string msg = err["message"];
  EXPECT_NE(msg.find("lr"), std::string::npos);
  EXPECT_NE(msg.find("epochs"), std::string::npos);
  EXPECT_NE(msg.find("transformer"), std::string::npos);
}

TEST(Cli, UnknownFlagAndConfigKeyAreRejected) {
  ScopedEnv env(kEnv.c_str(), "");
  EXPECT_EQ(invoke({"stats", "--bogus", "1"}).code, cli::kConfigError);
  TempDir dir("cli");
  fx::write_file(dir / "run.cfg", "# comment\nseed = 4\nlearning_rate = 0.1\n");
  const auto r = invoke({"stats", "--config", (dir / "run.cfg").string(), "--data", "x"});
  EXPECT_EQ(r.code, cli::kConfigError);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
  EXPECT_EQ(invoke({}).code, cli::kConfigError);
}

TEST(Cli, ExecCountsEngineRows) {
  ScopedEnv env(kEnv.c_str(), "");
  TempDir dir("cli");
  save_tables(dir / "tables.jsonl", std::vector<Table>{fx::racing_table()});
  const auto r = invoke({"exec", "--tables", (dir / "tables.jsonl").string(), "--table", "racing", "--query",
                        "SELECT COUNT Engine FROM table WHERE Driver = 'val musetti'"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out), (json{{"scalar", 3}}));

  const auto bad = invoke({"exec", "--tables", (dir / "tables.jsonl").string(), "--table", "racing", "--query",
                          "SELECT Nope FROM table"});
  EXPECT_EQ(bad.code, cli::kDataError);
  EXPECT_EQ(json::parse(lines_of(bad.err).back())["error"], "UnknownColumn");
}

TEST_F(CliTest, TrainOneEpochLogsOneJsonLine) {
  const auto log = lines_of(fx::read_file(*dir_ / "train.log"));
  ASSERT_EQ(log.size(), 1u);
  const auto j = json::parse(log[0]);
  for (const char* key : {"epoch", "L_agg", "L_sel", "L_whe", "dev_acc_ex", "dev_acc_lf"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["epoch"], 1);
  const auto summary = json::parse(train_run_->out);
  EXPECT_EQ(summary["epochs"], 1);
  EXPECT_EQ(summary["model"], "seq2sql");
  // The resolved config is logged before training starts.
  const auto first = json::parse(lines_of(train_run_->err).front());
  EXPECT_EQ(first["config"]["epochs"], "1");
  EXPECT_EQ(first["config"]["hidden"], "8");
}

TEST_F(CliTest, RlContinuesFromCheckpoint) {
  ScopedEnv env(kEnv.c_str(), "");
  const std::string rl_ckpt = (*dir_ / "rl.ckpt").string();
  const auto r = invoke({"train", "--data", data(), "--rl", "--from-checkpoint", checkpoint(), "--epochs", "1", "--lr",
                        "0.0001", "--checkpoint", rl_ckpt});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(r.out);
  EXPECT_EQ(summary["train"]["phase"], "rl");
  EXPECT_TRUE(std::filesystem::exists(rl_ckpt));
}

TEST_F(CliTest, EvalOfGoldPredictionsIsPerfect) {
  ScopedEnv env(kEnv.c_str(), "");
  const Dataset d = load_dataset(data());
  std::string lines;
  for (const auto& e : d.dev) {
    Prediction p;
    p.agg = e.gold.agg;
    p.sel = e.gold.select;
    p.query = e.gold;
    lines += prediction_to_json(p, e).dump() + "\n";
  }
  fx::write_file(*dir_ / "gold.jsonl", lines);
  const auto r = invoke({"eval", "--data", data(), "--score", (*dir_ / "gold.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["acc_ex"], 1.0);
  EXPECT_EQ(j["acc_lf"], 1.0);
  EXPECT_EQ(j["invalid_rate"], 0.0);
  EXPECT_EQ(j["n"], d.dev.size());
}

TEST_F(CliTest, EvalCheckpointWritesRereadablePredictions) {
  ScopedEnv env(kEnv.c_str(), "");
  const std::string preds = (*dir_ / "preds.jsonl").string();
  const auto r = invoke({"eval", "--data", data(), "--checkpoint", checkpoint(), "--predictions", preds});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_LE(j["acc_lf"].get<double>(), j["acc_ex"].get<double>());
  EXPECT_EQ(j["model"], "seq2sql");
  // Scoring the written predictions reproduces the report.
  const auto again = invoke({"eval", "--data", data(), "--score", preds});
  ASSERT_EQ(again.code, 0) << again.err;
  const auto k = json::parse(again.out);
  EXPECT_EQ(k["n_ex"], j["n_ex"]);
  EXPECT_EQ(k["n_lf"], j["n_lf"]);
  EXPECT_EQ(k["n_invalid"], j["n_invalid"]);
}

TEST_F(CliTest, PredictOutputRoundTripsThroughQueryJson) {
  ScopedEnv env(kEnv.c_str(), "");
  const Dataset d = load_dataset(data());
  ASSERT_FALSE(d.dev.empty());
  const Example& e = d.dev[0];
  const auto r = invoke({"predict", "--data", data(), "--checkpoint", checkpoint(), "--table", e.table_id,
                        "--question", e.question_raw});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["table_id"], e.table_id);
  if (j["pred"].contains("error")) {
    EXPECT_TRUE(j["sql"].is_null());
  } else {
    const Query q = query_from_json(j["pred"]);
    EXPECT_EQ(query_to_json(q), j["pred"]);
    EXPECT_EQ(serialize_query(q, d.table(e.table_id).header), j["sql"]);
  }
}

TEST_F(CliTest, ConfigFileFromEnvAndFlagOverride) {
  const std::string cfg = (*dir_ / "run.cfg").string();
  fx::write_file(cfg, "data = " + data() + "\nmodel = aug_ptr\nemb_dim = 4\nhidden = 4\nepochs = 1\n");
  ScopedEnv env(kEnv.c_str(), cfg);
  const std::string ckpt = (*dir_ / "env.ckpt").string();
  const auto r = invoke({"train", "--checkpoint", ckpt, "--hidden", "6"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto first = json::parse(lines_of(r.err).front());
  EXPECT_EQ(first["config"]["model"], "aug_ptr");
  EXPECT_EQ(first["config"]["hidden"], "6");
  EXPECT_EQ(json::parse(r.out)["model"], "aug_ptr");
}

TEST_F(CliTest, StatsPrintsJson) {
  ScopedEnv env(kEnv.c_str(), "");
  const auto r = invoke({"stats", "--data", data()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(json::parse(r.out).is_object());
}
