#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nl2sql/autodiff.hpp"
#include "nl2sql/datagen.hpp"
#include "nl2sql/eval.hpp"
#include "nl2sql/models.hpp"

namespace nl2sql {

// --- Reward ------------------------------------------------------------------------

struct Reward {
  double value = -2.0;
  Outcome cause = Outcome::Invalid;
};

// -2 for an invalid query, -1 for a wrong result, +1 for the gold result.
Reward reward(const Prediction& pred, const Query& gold, const Table& t);

// -R * sum_t log p(y_t). Throws LengthMismatch unless there is one log-prob
// per token, and EmptySequence for an empty episode.
ad::Var reinforce_loss(std::span<const std::string> tokens, std::span<const ad::Var> log_probs, double reward);

// --- Optimisation ------------------------------------------------------------------

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Updates every trainable parameter from its accumulated gradient.
  void step(ad::ParamStore& params);

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<ad::Tensor> m_, v_;
};

// Scales trainable gradients so their global L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_grad_norm(ad::ParamStore& params, double max_norm);

enum class Phase { Supervised, RL };
std::string_view to_string(Phase p);

struct TrainConfig {
  double lr = 3e-3;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  Phase phase = Phase::Supervised;
  bool clip = true;
  double clip_norm = 5.0;
  // Subtracted from every reward when use_baseline is set; off by default.
  bool use_baseline = false;
  double baseline = 0.0;

  void validate() const;  // throws ConfigError listing every problem
  nlohmann::json to_json() const;
};

struct StepStats {
  double agg = 0.0;
  double sel = 0.0;
  double whe = 0.0;
  double total = 0.0;  // agg + sel + whe, batch means
  double mean_reward = 0.0;
  double grad_norm = 0.0;
};

// One optimiser update on the batch-mean of the mixed loss. The WHERE term is
// teacher-forced cross entropy in the supervised phase and REINFORCE over a
// sampled WHERE stream in the RL phase (Seq2SQL only).
StepStats mixed_step(Model& model, std::span<const Prepared* const> batch, const TrainConfig& cfg, Adam& opt,
                     std::uint64_t step_seed);

struct EpochLog {
  std::size_t epoch = 0;
  double l_agg = 0.0;
  double l_sel = 0.0;
  double l_whe = 0.0;
  double dev_acc_ex = 0.0;
  double dev_acc_lf = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0: the starting parameters were never beaten
  double best_dev_acc_ex = 0.0;
  double best_dev_acc_lf = 0.0;
};

// Epoch loop with seeded shuffling and dev-set early stopping on execution
// accuracy. Training stops once `patience` epochs pass without improvement
// (so patience 0 runs one epoch) or at max_epochs; the model is left holding
// the best parameters. In the RL phase the starting model's dev score is the
// bar to beat.
TrainResult train(Model& model, std::span<const Example> train_set, std::span<const Example> dev_set,
                  const Dataset& tables, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// --- Bandit check ------------------------------------------------------------------

// A single pointer decoding step over a fixed three-token input. Sampling
// `rewarded` earns +1 and any other token -1; each update is one REINFORCE
// sample followed by an Adam step.
struct BanditConfig {
  std::size_t tokens = 3;
  std::size_t rewarded = 0;
  std::size_t dim = 8;
  double lr = 0.05;
  std::size_t max_updates = 2000;
  double target = 0.9;  // stop once p(rewarded) exceeds this
  std::uint64_t seed = 0;
};

struct BanditResult {
  std::size_t updates = 0;
  double initial_prob = 0.0;
  double final_prob = 0.0;
  bool reached = false;
};

BanditResult run_reinforce_bandit(const BanditConfig& cfg);

// --- Checkpoints -------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'N', '2', 'S', 'Q', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic, u32 version, u64 FNV-1a checksum of the rest, u64 header
// length, JSON header (model metadata, `extra`, manifest of name/shape/offset),
// then float64 little-endian payloads.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  nlohmann::json extra;
};

// Throws IoError, FormatError, VersionError or ChecksumError.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nl2sql
