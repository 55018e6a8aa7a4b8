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
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hlgen/autodiff.hpp"
#include "hlgen/error.hpp"
#include "hlgen/generator.hpp"
#include "hlgen/random.hpp"
#include "hlgen/textcore.hpp"

// Two-tower CNN classifier D(A, H): the article and the headline are each
// embedded, convolved with filter banks of widths 1/3/5 (tanh), max-pooled
// over time, concatenated and projected to a single sigmoid output.
namespace hlgen {

struct DiscriminatorDims {
  std::size_t vocab_size = 0;
  std::size_t emb_dim = 16;
  std::size_t filters = 32;
  std::vector<std::size_t> widths{1, 3, 5};

  std::size_t max_width() const { return *std::max_element(widths.begin(), widths.end()); }
  std::size_t feature_dim() const { return 2 * widths.size() * filters; }
};

class DiscriminatorModel {
 public:
  struct Tower {
    std::vector<std::size_t> W;  // [F, k, E] per width
    std::vector<std::size_t> b;  // [F] per width
  };

  DiscriminatorModel(DiscriminatorDims dims, std::uint64_t seed) : dims_(std::move(dims)) {
    if (dims_.vocab_size <= Vocabulary::kNumReserved || dims_.emb_dim == 0 || dims_.filters == 0 ||
        dims_.widths.empty()) {
      throw Error("discriminator: invalid dimensions");
    }
    const std::size_t E = dims_.emb_dim, F = dims_.filters;
    embedding_ = params_.add("disc.embedding", ad::Tensor(ad::Shape{dims_.vocab_size, E}));
    for (auto [tower, name] : {std::pair{&article_, "article"}, std::pair{&headline_, "headline"}}) {
      for (std::size_t k : dims_.widths) {
        const std::string prefix = std::string("disc.") + name + ".conv" + std::to_string(k);
        tower->W.push_back(params_.add(prefix + ".W", ad::Tensor(ad::Shape{F, k, E})));
        tower->b.push_back(params_.add(prefix + ".b", ad::Tensor(ad::Shape{F})));
      }
    }
    proj_w_ = params_.add("disc.proj.w", ad::Tensor(ad::Shape{dims_.feature_dim()}));
    proj_b_ = params_.add("disc.proj.b", ad::Tensor(ad::Shape{}));
    params_.init_uniform(seed);
  }

  const DiscriminatorDims& dims() const noexcept { return dims_; }
  ad::ParameterSet& params() noexcept { return params_; }
  const ad::ParameterSet& params() const noexcept { return params_; }
  std::size_t embedding() const noexcept { return embedding_; }
  const Tower& article_tower() const noexcept { return article_; }
  const Tower& headline_tower() const noexcept { return headline_; }
  std::size_t proj_w() const noexcept { return proj_w_; }
  std::size_t proj_b() const noexcept { return proj_b_; }

 private:
  DiscriminatorDims dims_;
  ad::ParameterSet params_;
  std::size_t embedding_ = 0;
  Tower article_, headline_;
  std::size_t proj_w_ = 0, proj_b_ = 0;
};

/// Maps tokens to base ids (UNK for OOV) and right-pads with PAD to at least `min_len`.
inline std::vector<std::size_t> disc_ids(const TokenSeq& tokens, const Vocabulary& vocab,
                                         std::size_t min_len) {
  std::vector<std::size_t> ids;
  ids.reserve(std::max(tokens.size(), min_len));
  for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
  while (ids.size() < min_len) ids.push_back(Vocabulary::kPad);
  return ids;
}

/// Pre-sigmoid score of an (article, headline) pair of id sequences.
template <class Leaf>
ad::Var d_logit_with(const DiscriminatorModel& m, Leaf leaf, std::span<const std::size_t> article,
                     std::span<const std::size_t> headline) {
  using namespace ad;
  const std::size_t min_len = m.dims().max_width();
  auto pad = [min_len](std::span<const std::size_t> ids) {
    std::vector<std::size_t> out(ids.begin(), ids.end());
    while (out.size() < min_len) out.push_back(Vocabulary::kPad);
    return out;
  };
  Var emb = leaf(m.embedding());
  std::vector<Var> pooled;
  auto tower = [&](const DiscriminatorModel::Tower& t, std::span<const std::size_t> ids) {
    Var x = gather_rows(emb, pad(ids));
    for (std::size_t k = 0; k < t.W.size(); ++k) {
      pooled.push_back(max_over_time(tanh(conv1d(x, leaf(t.W[k]), leaf(t.b[k])))));
    }
  };
  tower(m.article_tower(), article);
  tower(m.headline_tower(), headline);
  return add(dot(leaf(m.proj_w()), concat(pooled)), leaf(m.proj_b()));
}

inline ad::Var d_prob(ad::Graph& g, DiscriminatorModel& m, std::span<const std::size_t> article,
                      std::span<const std::size_t> headline) {
  return ad::sigmoid(
      d_logit_with(m, [&](std::size_t i) { return g.param(m.params()[i]); }, article, headline));
}

/// D(A, H) in (0, 1) from a read-only model.
inline double d_score(const DiscriminatorModel& m, std::span<const std::size_t> article,
                      std::span<const std::size_t> headline) {
  if (headline.empty()) throw Error("d_score: empty headline");
  ad::Graph g;
  return ad::sigmoid(d_logit_with(
                         m, [&](std::size_t i) { return g.constant(m.params()[i].value); },
                         article, headline))
      .item();
}

inline double d_score(const DiscriminatorModel& m, const Vocabulary& vocab, const TokenSeq& article,
                      const TokenSeq& headline) {
  return d_score(m, disc_ids(article, vocab, 0), disc_ids(headline, vocab, 0));
}

/// An (article, headline) pair as base-vocabulary ids.
struct DiscPair {
  std::vector<std::size_t> article;
  std::vector<std::size_t> headline;
};

inline DiscPair make_disc_pair(const TokenSeq& article, const TokenSeq& headline,
                               const Vocabulary& vocab) {
  return {disc_ids(article, vocab, 0), disc_ids(headline, vocab, 0)};
}

/// mean_real[-log D] + mean_fake[-log(1 - D)], logs floored at 1e-12.
inline ad::Var d_loss(ad::Graph& g, DiscriminatorModel& m, std::span<const DiscPair> real,
                      std::span<const DiscPair> fake) {
  using namespace ad;
  if (real.empty() || fake.empty()) throw Error("d_loss: both batches must be non-empty");
  std::vector<Var> r, f;
  for (const auto& p : real) r.push_back(log_floor(d_prob(g, m, p.article, p.headline)));
  for (const auto& p : fake) {
    f.push_back(log_floor(affine(d_prob(g, m, p.article, p.headline), -1.0, 1.0)));
  }
  return add(scale(add_n(r), -1.0 / static_cast<double>(r.size())),
             scale(add_n(f), -1.0 / static_cast<double>(f.size())));
}

/// The loss from precomputed scores, for reporting and tests.
inline double d_loss_value(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw Error("d_loss: both batches must be non-empty");
  double r = 0.0, f = 0.0;
  for (double d : d_real) r -= std::log(std::max(d, ad::kLogFloor));
  for (double d : d_fake) f -= std::log(std::max(1.0 - d, ad::kLogFloor));
  return r / static_cast<double>(d_real.size()) + f / static_cast<double>(d_fake.size());
}

/// One optimizer step on the loss over (real, fake). Returns the loss before the step.
inline double d_update(DiscriminatorModel& m, std::span<const DiscPair> real,
                       std::span<const DiscPair> fake, ad::Optimizer& opt) {
  m.params().zero_grad();
  ad::Graph g;
  ad::Var loss = d_loss(g, m, real, fake);
  g.backward(loss);
  opt.step(m.params());
  return loss.item();
}

/// Discriminator step whose fake headlines are fresh samples from the generator.
inline double d_train_step(DiscriminatorModel& m, const GeneratorModel& gen,
                           std::span<const EncodedPair> batch, std::span<const ExamplePair> raw,
                           const Vocabulary& vocab, std::size_t max_len, ad::Optimizer& opt,
                           Rng& rng) {
  if (batch.size() != raw.size()) throw AlignmentError("d_train_step: batch/raw size mismatch");
  std::vector<DiscPair> real, fake;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    real.push_back(make_disc_pair(raw[i].article, raw[i].headline, vocab));
    ad::Graph g;
    const GeneratorVars v = bind_frozen(g, gen);
    const SampleTrace tr = sample(v, encode(v, batch[i].src_ids), batch[i], max_len, rng);
    TokenSeq headline = decode_ids(tr.ids, batch[i].ext);
    if (headline.empty()) headline.push_back("<unk>");
    fake.push_back(make_disc_pair(raw[i].article, headline, vocab));
  }
  return d_update(m, real, fake, opt);
}

struct DiscAccuracy {
  double real = 0.0;
  double fake = 0.0;
};

/// Fraction of real scores strictly above `threshold` and fake scores strictly below it.
inline DiscAccuracy d_accuracy(std::span<const double> d_real, std::span<const double> d_fake,
                               double threshold = 0.5) {
  if (d_real.empty() || d_fake.empty()) throw Error("d_accuracy: both batches must be non-empty");
  const auto above = std::count_if(d_real.begin(), d_real.end(), [&](double d) { return d > threshold; });
  const auto below = std::count_if(d_fake.begin(), d_fake.end(), [&](double d) { return d < threshold; });
  return {static_cast<double>(above) / static_cast<double>(d_real.size()),
          static_cast<double>(below) / static_cast<double>(d_fake.size())};
}

inline DiscAccuracy d_accuracy(const DiscriminatorModel& m, std::span<const DiscPair> real,
                               std::span<const DiscPair> fake, double threshold = 0.5) {
  std::vector<double> r, f;
  for (const auto& p : real) r.push_back(d_score(m, p.article, p.headline));
  for (const auto& p : fake) f.push_back(d_score(m, p.article, p.headline));
  return d_accuracy(r, f, threshold);
}

}  // namespace hlgen
