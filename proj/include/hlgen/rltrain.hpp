// Copyright 2026 The hlgen Authors.
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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hlgen/autodiff.hpp"
#include "hlgen/discriminator.hpp"
#include "hlgen/error.hpp"
#include "hlgen/generator.hpp"
#include "hlgen/random.hpp"
#include "hlgen/reward.hpp"
#include "hlgen/textcore.hpp"

// REINFORCE with a per-step linear baseline, the mixed RL/ML objective, and
// the three training phases (ML pretraining, discriminator pretraining, RL).
namespace hlgen {

enum class RewardKind { rouge, rouge_rp, rouge_rp_adv };
enum class DiscUpdateMode { continual, frozen };

inline std::string to_string(RewardKind k) {
  switch (k) {
    case RewardKind::rouge: return "rouge";
    case RewardKind::rouge_rp: return "rouge_rp";
    case RewardKind::rouge_rp_adv: return "rouge_rp_adv";
  }
  return "?";
}

struct RLConfig {
  RewardKind reward_kind = RewardKind::rouge_rp_adv;
  double beta = 2000.0;
  double alpha = 0.97;  // weight of L_RL in alpha L_RL + (1 - alpha) L_ml
  double lambda = 1.0;
  double gen_lr = 1e-4;
  double baseline_lr = 1e-3;
  double disc_lr = 1e-3;
  double clip_norm = 2.0;  // <= 0 disables clipping
  std::size_t max_dec_len = 12;
  DiscUpdateMode disc_mode = DiscUpdateMode::continual;
  ad::OptimizerKind optimizer = ad::OptimizerKind::adam;

  void validate() const {
    if (alpha < 0 || alpha > 1) throw ConfigError("alpha must lie in [0,1]");
    if (!(beta > 0)) throw ConfigError("beta must be positive");
    if (lambda < 0) throw ConfigError("lambda must be nonnegative");
    if (max_dec_len == 0) throw ConfigError("max_dec_len must be >= 1");
  }
};

/// Linear reward predictor R_t = W_r . o_t + b_r over the decoder feature o_t.
class BaselineRegressor {
 public:
  BaselineRegressor(std::size_t feature_dim, std::uint64_t seed) {
    W_ = params_.add("baseline.W_r", ad::Tensor(ad::Shape{feature_dim}));
    b_ = params_.add("baseline.b_r", ad::Tensor(ad::Shape{}));
    params_.init_uniform(seed);
  }

  std::size_t feature_dim() const { return params_[W_].value.size(); }
  ad::ParameterSet& params() noexcept { return params_; }
  const ad::ParameterSet& params() const noexcept { return params_; }
  ad::Parameter& weights() { return params_[W_]; }
  ad::Parameter& bias() { return params_[b_]; }
  const ad::Parameter& weights() const { return params_[W_]; }
  const ad::Parameter& bias() const { return params_[b_]; }

  double predict(std::span<const double> feature) const {
    const auto& w = params_[W_].value;
    if (feature.size() != w.size()) {
      throw ShapeError("baseline: feature dim " + std::to_string(feature.size()) + ", expected " +
                       std::to_string(w.size()));
    }
    double s = params_[b_].value[0];
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * feature[i];
    return s;
  }

  ad::Var predict(ad::Graph& g, ad::Var feature) {
    return ad::add(ad::dot(g.param(params_[W_]), feature), g.param(params_[b_]));
  }

 private:
  ad::ParameterSet params_;
  std::size_t W_ = 0, b_ = 0;
};

inline double baseline_predict(const BaselineRegressor& b, std::span<const double> feature) {
  return b.predict(feature);
}

/// (1/T) sum_t (R - R_t)^2
inline double baseline_loss(double reward, std::span<const double> predictions) {
  if (predictions.empty()) throw Error("baseline_loss: need at least one step");
  double s = 0.0;
  for (double p : predictions) s += (reward - p) * (reward - p);
  return s / static_cast<double>(predictions.size());
}

inline ad::Var baseline_loss(double reward, const std::vector<ad::Var>& predictions) {
  using namespace ad;
  if (predictions.empty()) throw Error("baseline_loss: need at least one step");
  std::vector<Var> sq;
  for (const Var& p : predictions) {
    Var diff = affine(p, -1.0, reward);
    sq.push_back(mul(diff, diff));
  }
  return scale(add_n(sq), 1.0 / static_cast<double>(predictions.size()));
}

/// -(1/T) sum_t (R - R_t) log P(w_t); the baselines enter as constants.
inline ad::Var rl_loss(const std::vector<ad::Var>& log_probs, double reward,
                       std::span<const double> baselines) {
  using namespace ad;
  if (log_probs.empty() || log_probs.size() != baselines.size()) {
    throw Error("rl_loss: need one baseline per step and at least one step");
  }
  const double T = static_cast<double>(log_probs.size());
  std::vector<Var> terms;
  for (std::size_t t = 0; t < log_probs.size(); ++t) {
    terms.push_back(scale(log_probs[t], -(reward - baselines[t]) / T));
  }
  return add_n(terms);
}

inline double rl_loss(std::span<const double> log_probs, double reward,
                      std::span<const double> baselines) {
  if (log_probs.empty() || log_probs.size() != baselines.size()) {
    throw Error("rl_loss: need one baseline per step and at least one step");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < log_probs.size(); ++t) s += (reward - baselines[t]) * log_probs[t];
  return -s / static_cast<double>(log_probs.size());
}

/// Reward of a sampled headline under `kind`. The scorer supplies D(A,H) and
/// is required for ROUGE-RP-ADV; when present it is recorded for every kind.
inline RewardBreakdown compute_reward(const TokenSeq& hyp, const TokenSeq& ref,
                                      const TokenSeq& article, RewardKind kind, double beta,
                                      const HeadlineScorer& scorer = {}) {
  if (kind == RewardKind::rouge_rp_adv && !scorer) {
    throw Error("compute_reward: ROUGE-RP-ADV requires a discriminator");
  }
  RewardBreakdown b;
  b.beta = beta;
  b.rouge_l_f = rouge_l(hyp, ref).f;
  b.repetition_rate = repetition_rate(hyp);
  b.rouge_rp = (1.0 - b.repetition_rate) * b.rouge_l_f;
  if (scorer) b.d_score = strip_markers(hyp).empty() ? 0.0 : scorer(article, strip_markers(hyp));
  switch (kind) {
    case RewardKind::rouge: b.final_reward = b.rouge_l_f; break;
    case RewardKind::rouge_rp: b.final_reward = b.rouge_rp; break;
    case RewardKind::rouge_rp_adv: b.final_reward = rouge_rp_adv(b.rouge_rp, b.d_score, beta); break;
  }
  return b;
}

inline HeadlineScorer make_scorer(const DiscriminatorModel& disc, const Vocabulary& vocab) {
  return [&disc, &vocab](const TokenSeq& a, const TokenSeq& h) { return d_score(disc, vocab, a, h); };
}

inline void maybe_clip(ad::ParameterSet& params, double clip_norm) {
  if (clip_norm > 0) ad::clip_grad_norm(params, clip_norm);
}

/// Maximum-likelihood trainer: one optimizer step per batch on the mean loss.
class MlTrainer {
 public:
  MlTrainer(GeneratorModel& gen, double lambda, ad::Optimizer opt, double clip_norm)
      : gen_(gen), lambda_(lambda), opt_(std::move(opt)), clip_norm_(clip_norm) {}

  /// Zeroes and fills the generator's grads; returns the mean loss.
  double accumulate(std::span<const EncodedPair> batch) {
    if (batch.empty()) throw Error("ml step: empty batch");
    gen_.params().zero_grad();
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
      ad::Graph g;
      const GeneratorVars v = bind_trainable(g, gen_);
      const EncoderOutput enc = encode(v, ex.src_ids);
      ad::Var loss = ad::scale(ml_loss(v, enc, ex, lambda_).loss, inv);
      g.backward(loss);
      total += loss.item();
    }
    return total;
  }

  double step(std::span<const EncodedPair> batch) {
    const double loss = accumulate(batch);
    maybe_clip(gen_.params(), clip_norm_);
    opt_.step(gen_.params());
    return loss;
  }

  ad::Optimizer& optimizer() { return opt_; }

 private:
  GeneratorModel& gen_;
  double lambda_;
  ad::Optimizer opt_;
  double clip_norm_;
};

struct RlStepMetrics {
  double reward_mean = 0.0;
  double rep_rate = 0.0;
  double rouge_l = 0.0;
  double d_score = 0.0;
  double rl_loss = 0.0;
  double ml_loss = 0.0;
  double baseline_loss = 0.0;
  double disc_loss = std::numeric_limits<double>::quiet_NaN();
};

/// REINFORCE trainer. Per example: sample from P(w), score the sample,
/// predict per-step baselines from detached o_t, and backpropagate
/// alpha L_RL + (1 - alpha) L_ml. The baseline is fit on L_b with its own
/// optimizer; the discriminator (when present and continual) takes one step
/// per generator step.
class RlTrainer {
 public:
  RlTrainer(GeneratorModel& gen, BaselineRegressor& baseline, DiscriminatorModel* disc,
            const Vocabulary& vocab, RLConfig cfg, std::uint64_t seed)
      : gen_(gen),
        baseline_(baseline),
        disc_(disc),
        vocab_(vocab),
        cfg_(cfg),
        gen_opt_(cfg.optimizer, cfg.gen_lr),
        baseline_opt_(cfg.optimizer, cfg.baseline_lr),
        disc_opt_(ad::OptimizerKind::adam, cfg.disc_lr),
        rng_(seed) {
    cfg_.validate();
    if (cfg_.reward_kind == RewardKind::rouge_rp_adv && !disc_) {
      throw Error("RL with ROUGE-RP-ADV requires a discriminator");
    }
    if (baseline_.feature_dim() != gen_.dims().hidden_dim) {
      throw ShapeError("baseline feature dim does not match the generator's o_t");
    }
  }

  /// Fills generator grads (zeroed first) and updates the baseline.
  RlStepMetrics accumulate(std::span<const EncodedPair> batch, std::span<const ExamplePair> raw) {
    if (batch.empty() || batch.size() != raw.size()) throw Error("rl step: bad batch");
    gen_.params().zero_grad();
    baseline_.params().zero_grad();
    const HeadlineScorer scorer = disc_ ? make_scorer(*disc_, vocab_) : HeadlineScorer{};
    const double inv = 1.0 / static_cast<double>(batch.size());
    const double a = cfg_.alpha;
    RlStepMetrics m;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const EncodedPair& ex = batch[i];
      ad::Graph g;
      const GeneratorVars v = bind_trainable(g, gen_);
      const EncoderOutput enc = encode(v, ex.src_ids);
      const SampleTrace tr = sample(v, enc, ex, cfg_.max_dec_len, rng_);
      const TokenSeq hyp = decode_ids(tr.ids, ex.ext);
      const RewardBreakdown r =
          compute_reward(hyp, raw[i].headline, raw[i].article, cfg_.reward_kind, cfg_.beta, scorer);

      std::vector<double> predicted;
      ad::Graph bg;
      std::vector<ad::Var> pred_vars;
      for (const ad::Var& o : tr.features) {
        pred_vars.push_back(baseline_.predict(bg, bg.constant(o.value())));
        predicted.push_back(pred_vars.back().item());
      }
      ad::Var lb = ad::scale(baseline_loss(r.final_reward, pred_vars), inv);
      bg.backward(lb);

      ad::Var lrl = rl_loss(tr.log_probs, r.final_reward, predicted);
      ad::Var total = ad::scale(lrl, a * inv);
      if (a < 1.0) {
        const MlLoss ml = ml_loss(v, enc, ex, cfg_.lambda);
        total = ad::add(total, ad::scale(ml.loss, (1.0 - a) * inv));
        m.ml_loss += ml.loss.item() * inv;
      }
      g.backward(total);

      m.reward_mean += r.final_reward * inv;
      m.rep_rate += r.repetition_rate * inv;
      m.rouge_l += r.rouge_l_f * inv;
      m.d_score += r.d_score * inv;
      m.rl_loss += lrl.item() * inv;
      m.baseline_loss += lb.item();
    }
    return m;
  }

  RlStepMetrics step(std::span<const EncodedPair> batch, std::span<const ExamplePair> raw) {
    RlStepMetrics m = accumulate(batch, raw);
    baseline_opt_.step(baseline_.params());
    maybe_clip(gen_.params(), cfg_.clip_norm);
    gen_opt_.step(gen_.params());
    if (disc_ && cfg_.disc_mode == DiscUpdateMode::continual) {
      m.disc_loss = d_train_step(*disc_, gen_, batch, raw, vocab_, cfg_.max_dec_len, disc_opt_, rng_);
    }
    return m;
  }

  const RLConfig& config() const noexcept { return cfg_; }

 private:
  GeneratorModel& gen_;
  BaselineRegressor& baseline_;
  DiscriminatorModel* disc_;
  const Vocabulary& vocab_;
  RLConfig cfg_;
  ad::Optimizer gen_opt_;
  ad::Optimizer baseline_opt_;
  ad::Optimizer disc_opt_;
  Rng rng_;
};

/// Fisher-Yates permutation of 0..n-1 drawn from `rng`.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

/// Machine-readable training log: one `key=value ...` line per step.
class TrainLog {
 public:
  explicit TrainLog(std::ostream* os = nullptr) : os_(os) {}

  void ml(std::size_t step, double loss) {
    line() << "step=" << step << " phase=ml loss=" << fmt(loss) << '\n';
  }
  void ml_epoch(std::size_t epoch, double loss, double dev_rouge1) {
    line() << "epoch=" << epoch << " phase=ml loss=" << fmt(loss)
           << " dev_rouge1_f=" << fmt(dev_rouge1) << '\n';
  }
  void disc(std::size_t step, double loss) {
    line() << "step=" << step << " phase=disc loss=" << fmt(loss) << '\n';
  }
  void rl(std::size_t step, const RlStepMetrics& m) {
    line() << "step=" << step << " phase=rl reward_mean=" << fmt(m.reward_mean)
           << " rep_rate=" << fmt(m.rep_rate) << " rouge_l=" << fmt(m.rouge_l)
           << " d_score=" << fmt(m.d_score) << '\n';
  }

 private:
  std::ostream& line() {
    static std::ostringstream sink;
    if (!os_) {
      sink.str("");
      return sink;
    }
    return *os_;
  }
  static std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(8) << v;
    return s.str();
  }
  std::ostream* os_;
};

struct MlPhaseConfig {
  double lr = 1e-4;
  double lambda = 1.0;
  double clip_norm = 2.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 20;
  std::size_t patience = 2;  // extra epochs tolerated without dev improvement
  std::size_t beam = 5;
  std::size_t max_dec_len = 12;
  ad::OptimizerKind optimizer = ad::OptimizerKind::adam;
};

struct MlPhaseResult {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_dev_rouge1 = -1.0;
  double last_loss = 0.0;
};

inline double dev_rouge1(const GeneratorModel& gen, std::span<const EncodedPair> dev,
                         std::span<const ExamplePair> dev_raw, std::size_t beam,
                         std::size_t max_len) {
  std::vector<TokenSeq> hyps, refs;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    hyps.push_back(generate_headline(gen, dev[i], beam, max_len));
    refs.push_back(dev_raw[i].headline);
  }
  return score_corpus(hyps, refs).rouge1_f;
}

/// ML training with early stopping on dev ROUGE-1 f; the best epoch's parameters are kept.
inline MlPhaseResult train_ml_phase(GeneratorModel& gen, std::span<const EncodedPair> train,
                                    std::span<const EncodedPair> dev,
                                    std::span<const ExamplePair> dev_raw, const MlPhaseConfig& cfg,
                                    Rng& rng, TrainLog& log) {
  if (train.empty()) throw Error("ML phase: empty training corpus");
  MlTrainer trainer(gen, cfg.lambda, ad::Optimizer(cfg.optimizer, cfg.lr), cfg.clip_norm);
  MlPhaseResult res;
  ad::NamedTensors best = ad::collect(gen.params());
  std::size_t since_best = 0, step = 0;
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t off = 0; off < order.size(); off += bs) {
      std::vector<EncodedPair> batch;
      for (std::size_t k = off; k < std::min(order.size(), off + bs); ++k) batch.push_back(train[order[k]]);
      res.last_loss = trainer.step(batch);
      epoch_loss += res.last_loss;
      ++batches;
      log.ml(++step, res.last_loss);
    }
    res.epochs_run = epoch;
    const double score = dev.empty() ? -epoch_loss : dev_rouge1(gen, dev, dev_raw, cfg.beam, cfg.max_dec_len);
    log.ml_epoch(epoch, epoch_loss / static_cast<double>(batches), dev.empty() ? 0.0 : score);
    if (score > res.best_dev_rouge1 || epoch == 1) {
      res.best_dev_rouge1 = score;
      res.best_epoch = epoch;
      best = ad::collect(gen.params());
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  ad::assign(gen.params(), best);
  return res;
}

struct DiscPhaseConfig {
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  std::size_t max_dec_len = 12;
};

/// Discriminator pretraining against fresh generator samples.
inline double train_disc_phase(DiscriminatorModel& disc, const GeneratorModel& gen,
                               std::span<const EncodedPair> train, std::span<const ExamplePair> raw,
                               const Vocabulary& vocab, const DiscPhaseConfig& cfg, Rng& rng,
                               TrainLog& log) {
  if (train.empty()) throw Error("discriminator phase: empty training corpus");
  ad::Optimizer opt(ad::OptimizerKind::adam, cfg.lr);
  const std::size_t bs = std::max<std::size_t>(1, cfg.batch_size);
  double loss = 0.0;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    for (std::size_t off = 0; off < order.size(); off += bs) {
      std::vector<EncodedPair> batch;
      std::vector<ExamplePair> batch_raw;
      for (std::size_t k = off; k < std::min(order.size(), off + bs); ++k) {
        batch.push_back(train[order[k]]);
        batch_raw.push_back(raw[order[k]]);
      }
      loss = d_train_step(disc, gen, batch, batch_raw, vocab, cfg.max_dec_len, opt, rng);
      log.disc(++step, loss);
    }
  }
  return loss;
}

struct RlPhaseConfig {
  RLConfig rl;
  std::size_t batch_size = 16;
  std::size_t steps = 100;
};

inline RlStepMetrics train_rl_phase(GeneratorModel& gen, BaselineRegressor& baseline,
                                    DiscriminatorModel* disc, std::span<const EncodedPair> train,
                                    std::span<const ExamplePair> raw, const Vocabulary& vocab,
                                    const RlPhaseConfig& cfg, Rng& rng, TrainLog& log) {
  if (train.empty()) throw Error("RL phase: empty training corpus");
  RlTrainer trainer(gen, baseline, disc, vocab, cfg.rl, rng());
  const std::size_t bs = std::max<std::size_t>(1, std::min(cfg.batch_size, train.size()));
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  RlStepMetrics last;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<EncodedPair> batch;
    std::vector<ExamplePair> batch_raw;
    while (batch.size() < bs) {
      if (cursor == order.size()) {
        order = shuffled_indices(train.size(), rng);
        cursor = 0;
      }
      batch.push_back(train[order[cursor]]);
      batch_raw.push_back(raw[order[cursor]]);
      ++cursor;
    }
    last = trainer.step(batch, batch_raw);
    log.rl(step, last);
  }
  return last;
}

}  // namespace hlgen
