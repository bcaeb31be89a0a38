#include "nl2sql/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>

#include "nl2sql/error.hpp"

namespace nl2sql {

using ad::Graph;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

Reward reward(const Prediction& pred, const Query& gold, const Table& t) {
  const Outcome o = score_prediction(pred, gold, t);
  switch (o) {
    case Outcome::Invalid: return {-2.0, o};
    case Outcome::WrongResult: return {-1.0, o};
    case Outcome::Correct: return {1.0, o};
  }
  return {};
}

Var reinforce_loss(std::span<const std::string> tokens, std::span<const Var> log_probs, double reward) {
  if (tokens.size() != log_probs.size()) {
    throw LengthMismatch(std::to_string(tokens.size()) + " tokens but " + std::to_string(log_probs.size()) +
                         " log-probabilities");
  }
  if (log_probs.empty()) throw EmptySequence("reinforce_loss over an empty episode");
  Var total = log_probs.size() == 1 ? log_probs[0] : ad::sum(ad::concat(log_probs, 1));
  return ad::scale(total, -reward);
}

// --- optimisation ------------------------------------------------------------------

void Adam::step(ad::ParamStore& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.rows(), params[i].value.cols());
      v_.emplace_back(params[i].value.rows(), params[i].value.cols());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable || p.grad.empty()) continue;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      p.value[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

double clip_grad_norm(ad::ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    for (double g : params[i].grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].trainable) continue;
      for (double& g : params[i].grad.data()) g *= k;
    }
  }
  return norm;
}

std::string_view to_string(Phase p) { return p == Phase::Supervised ? "supervised" : "rl"; }

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(lr >= 0.0) || !std::isfinite(lr)) problems.push_back("lr must be a finite non-negative number");
  if (max_epochs == 0) problems.push_back("max_epochs must be positive");
  if (batch_size == 0) problems.push_back("batch_size must be positive");
  if (clip && !(clip_norm > 0.0)) problems.push_back("clip_norm must be positive");
  if (problems.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& p : problems) msg += " " + p + ";";
  msg.pop_back();
  throw ConfigError(msg);
}

json TrainConfig::to_json() const {
  return {{"lr", lr},           {"max_epochs", max_epochs}, {"patience", patience},
          {"batch_size", batch_size}, {"seed", seed},     {"phase", std::string(to_string(phase))},
          {"clip", clip},       {"clip_norm", clip_norm},   {"use_baseline", use_baseline},
          {"baseline", baseline}};
}

namespace {

struct ExampleLoss {
  Var agg, sel, whe, total;
  double reward = 0.0;
};

ExampleLoss rl_loss(Graph& g, const Seq2SqlModel& model, const Prepared& p, const TrainConfig& cfg) {
  ExampleLoss out;
  const Query& gold = p.example->gold;
  const auto& schema = p.table->header;
  auto enc = model.encode(g, p);
  Var agg = model.agg_logits(g, enc);
  Var sel = model.sel_logits(g, enc);
  out.agg = ad::cross_entropy(agg, static_cast<std::size_t>(gold.agg));
  out.sel = ad::cross_entropy(sel, gold.select);
  auto probs = [](const Tensor& t) {
    std::vector<double> p(t.data().begin(), t.data().end());
    double m = p[0], z = 0.0;
    for (double x : p) m = std::max(m, x);
    for (double& x : p) z += (x = std::exp(x - m));
    for (double& x : p) x /= z;
    return p;
  };
  const auto [a, s] = Seq2SqlModel::best_valid_head(probs(agg.value()), probs(sel.value()), schema);
  auto d = model.decode_where(g, enc, p, DecodeMode::Sample, model.config().max_decode_len);
  out.reward = reward(assemble_prediction(a, s, d.tokens, schema), gold, *p.table).value;
  out.whe = reinforce_loss(d.tokens, d.log_probs, out.reward - (cfg.use_baseline ? cfg.baseline : 0.0));
  out.total = ad::add(ad::add(out.agg, out.sel), out.whe);
  return out;
}

}  // namespace

StepStats mixed_step(Model& model, std::span<const Prepared* const> batch, const TrainConfig& cfg, Adam& opt,
                     std::uint64_t step_seed) {
  StepStats stats;
  if (batch.empty()) return stats;
  const Seq2SqlModel* s2s = nullptr;
  if (cfg.phase == Phase::RL) {
    s2s = dynamic_cast<const Seq2SqlModel*>(&model);
    if (!s2s) throw ConfigError("the RL phase needs a seq2sql model");
  }
  model.params().zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Prepared& p = *batch[i];
    try {
      Graph g(true, derive_seed(step_seed, std::to_string(i)));
      ExampleLoss l;
      if (s2s) {
        l = rl_loss(g, *s2s, p, cfg);
      } else {
        auto parts = model.supervised_loss(g, p);
        l = {parts.agg, parts.sel, parts.whe, parts.total, 0.0};
      }
      if (!l.total) continue;
      if (l.agg) stats.agg += l.agg.value().item() * inv;
      if (l.sel) stats.sel += l.sel.value().item() * inv;
      if (l.whe) stats.whe += l.whe.value().item() * inv;
      stats.mean_reward += l.reward * inv;
      g.backward(ad::scale(l.total, inv));
    } catch (const NonFiniteValue& e) {
      throw NonFiniteValue("example " + std::to_string(i) + " of batch (table " + p.example->table_id +
                           "): " + e.what());
    }
  }
  stats.total = stats.agg + stats.sel + stats.whe;
  stats.grad_norm = cfg.clip ? clip_grad_norm(model.params(), cfg.clip_norm) : 0.0;
  opt.step(model.params());
  return stats;
}

json EpochLog::to_json() const {
  return {{"epoch", epoch}, {"L_agg", l_agg},           {"L_sel", l_sel},
          {"L_whe", l_whe}, {"dev_acc_ex", dev_acc_ex}, {"dev_acc_lf", dev_acc_lf}};
}

namespace {

std::vector<Tensor> snapshot(const ad::ParamStore& params) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(params[i].value);
  return out;
}

void restore(ad::ParamStore& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = values[i];
}

}  // namespace

TrainResult train(Model& model, std::span<const Example> train_set, std::span<const Example> dev_set,
                  const Dataset& tables, const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw EmptyInput("training set is empty");
  std::vector<Prepared> prepared;
  prepared.reserve(train_set.size());
  std::size_t unpointable = 0;
  for (const auto& e : train_set) {
    prepared.push_back(model.prepare(e, tables.table(e.table_id)));
    const bool pointer = model.kind() != ModelKind::Baseline;
    if (pointer && !prepared.back().targets) ++unpointable;
  }
  if (unpointable > 0) {
    std::cerr << "warning: " << unpointable << " training examples have values missing from their question\n";
  }

  TrainResult result;
  auto dev_eval = [&] { return evaluate(predict_all(model, dev_set, tables), dev_set, tables); };
  std::vector<Tensor> best = snapshot(model.params());
  double best_acc = -1.0;
  if (cfg.phase == Phase::RL) {
    const auto rep = dev_eval();
    best_acc = result.best_dev_acc_ex = rep.acc_ex;
    result.best_dev_acc_lf = rep.acc_lf;
  }

  Adam opt(cfg.lr);
  std::vector<std::size_t> order(prepared.size());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, "epoch:" + std::to_string(epoch)));
    rng.shuffle(order.begin(), order.end());

    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Prepared*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(&prepared[order[k]]);
      }
      const auto s = mixed_step(model, batch, cfg, opt, derive_seed(cfg.seed, "step:" + std::to_string(step++)));
      const double w = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      log.l_agg += s.agg * w;
      log.l_sel += s.sel * w;
      log.l_whe += s.whe * w;
    }
    const auto rep = dev_eval();
    log.dev_acc_ex = rep.acc_ex;
    log.dev_acc_lf = rep.acc_lf;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    // Without a dev set every epoch counts as an improvement.
    if (dev_set.empty() || rep.acc_ex > best_acc) {
      best_acc = rep.acc_ex;
      best = snapshot(model.params());
      result.best_epoch = epoch;
      result.best_dev_acc_ex = rep.acc_ex;
      result.best_dev_acc_lf = rep.acc_lf;
    }
    if (epoch - result.best_epoch >= cfg.patience) break;
  }
  restore(model.params(), best);
  return result;
}

// --- bandit ------------------------------------------------------------------------

BanditResult run_reinforce_bandit(const BanditConfig& cfg) {
  if (cfg.tokens == 0 || cfg.rewarded >= cfg.tokens || cfg.dim == 0) {
    throw ConfigError("bandit needs at least one token, a rewarded index below it and a positive dim");
  }
  Rng rng(cfg.seed);
  ad::ParamStore params;
  // The input encodings stay fixed; the decoder state and scorer learn.
  auto& h = params.add("h", ad::glorot(cfg.tokens, cfg.dim, rng), false);
  auto& gs = params.add("gs", ad::glorot(1, cfg.dim, rng));
  auto& w = params.add("w", ad::glorot(cfg.dim, 1, rng));
  auto& u = params.add("u", ad::glorot(cfg.dim, cfg.dim, rng));
  auto& v = params.add("v", ad::glorot(cfg.dim, cfg.dim, rng));
  Adam opt(cfg.lr);

  auto policy = [&](Graph& g) {
    return ad::softmax(pointer_scores(g, g.param(gs), g.param(h), g.param(w), g.param(u), g.param(v)));
  };
  auto p_rewarded = [&] {
    Graph g;
    return policy(g).value()[cfg.rewarded];
  };

  BanditResult out;
  out.initial_prob = out.final_prob = p_rewarded();
  while (out.final_prob <= cfg.target && out.updates < cfg.max_updates) {
    Graph g;
    Var dist = policy(g);
    const double x = rng.uniform();
    std::size_t pick = cfg.tokens - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < cfg.tokens; ++i) {
      acc += dist.value()[i];
      if (x < acc) {
        pick = i;
        break;
      }
    }
    const std::vector<std::string> episode = {std::to_string(pick)};
    const std::vector<Var> log_probs = {ad::scale(ad::neg_log_prob(dist, pick), -1.0)};
    params.zero_grad();
    g.backward(reinforce_loss(episode, log_probs, pick == cfg.rewarded ? 1.0 : -1.0));
    opt.step(params);
    ++out.updates;
    out.final_prob = p_rewarded();
  }
  out.reached = out.final_prob > cfg.target;
  return out;
}

// --- checkpoints -------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return x;
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return x;
}

constexpr std::size_t kPrefixSize = 8 + 4 + 8;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const json& extra) {
  const auto& params = model.params();
  json manifest = json::array();
  std::string payload;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    manifest.push_back({{"name", p.name},
                        {"shape", {p.value.rows(), p.value.cols()}},
                        {"offset", payload.size()},
                        {"trainable", p.trainable}});
    for (double x : p.value.data()) put_u64(payload, std::bit_cast<std::uint64_t>(x));
  }
  const json header = {{"model", model.metadata()}, {"extra", extra.is_null() ? json::object() : extra},
                       {"manifest", manifest}};
  const std::string header_text = header.dump();
  std::string body;
  put_u64(body, header_text.size());
  body += header_text;
  body += payload;

  std::string file(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(file, kCheckpointVersion);
  put_u64(file, fnv1a64(body));
  file += body;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (file.size() < sizeof kCheckpointMagic || std::memcmp(file.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("'" + path.string() + "' is not a checkpoint file");
  }
  if (file.size() < kPrefixSize) throw ChecksumError("checkpoint '" + path.string() + "' is truncated");
  const std::uint32_t version = get_u32(file, 8);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const std::string body = file.substr(kPrefixSize);
  if (fnv1a64(body) != get_u64(file, 12)) {
    throw ChecksumError("checkpoint '" + path.string() + "' is corrupt or truncated");
  }
  const std::uint64_t header_len = get_u64(body, 0);
  if (header_len > body.size() - 8) throw FormatError("checkpoint header overruns the file");
  json header;
  try {
    header = json::parse(body.substr(8, header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  const std::size_t payload_at = 8 + header_len;

  LoadedCheckpoint out;
  out.model = Model::from_metadata(header.at("model"));
  out.extra = header.value("extra", json::object());
  auto& params = out.model->params();
  std::size_t seen = 0;
  for (const auto& entry : header.at("manifest")) {
    const auto name = entry.at("name").get<std::string>();
    if (!params.contains(name)) throw FormatError("checkpoint has unknown parameter '" + name + "'");
    auto& p = params.get(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols()) {
      throw FormatError("checkpoint shape mismatch for '" + name + "'");
    }
    const std::size_t offset = payload_at + entry.at("offset").get<std::size_t>();
    if (offset + 8 * p.value.size() > body.size()) throw FormatError("payload for '" + name + "' overruns the file");
    for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] = std::bit_cast<double>(get_u64(body, offset + 8 * k));
    p.trainable = entry.value("trainable", true);
    ++seen;
  }
  if (seen != params.size()) throw FormatError("checkpoint is missing parameters");
  return out;
}

}  // namespace nl2sql
