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
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hlgen/autodiff.hpp"
#include "hlgen/error.hpp"
#include "hlgen/random.hpp"
#include "hlgen/textcore.hpp"

// Pointer-generator sequence-to-sequence model with coverage:
// bi-LSTM encoder, LSTM decoder with additive attention over encoder states
// and accumulated attention (coverage), and an output distribution that
// mixes a vocabulary softmax with copy mass over the article positions.
namespace hlgen {

struct GeneratorDims {
  std::size_t vocab_size = 0;
  std::size_t emb_dim = 16;
  std::size_t hidden_dim = 32;

  std::size_t enc_dim() const { return 2 * hidden_dim; }
  std::size_t attn_dim() const { return 2 * hidden_dim; }
};

/// Trainable parameters. Names are stable checkpoint keys.
class GeneratorModel {
 public:
  struct Index {
    std::size_t embedding;
    std::size_t enc_fw_W, enc_fw_b, enc_bw_W, enc_bw_b;
    std::size_t bridge_W_h, bridge_b_h, bridge_W_c, bridge_b_c;
    std::size_t dec_W, dec_b;
    std::size_t attn_W_h, attn_W_s, attn_w_c, attn_b, attn_v;
    std::size_t out_V, out_b, out_V2, out_b2;
    std::size_t ptr_w_h, ptr_w_s, ptr_w_x, ptr_b;
  };

  GeneratorModel(GeneratorDims dims, std::uint64_t seed) : dims_(dims) {
    if (dims.vocab_size <= Vocabulary::kNumReserved || dims.emb_dim == 0 || dims.hidden_dim == 0) {
      throw Error("generator: invalid dimensions");
    }
    const std::size_t V = dims.vocab_size, E = dims.emb_dim, H = dims.hidden_dim;
    const std::size_t D = dims.enc_dim(), A = dims.attn_dim();
    auto add = [this](const char* name, ad::Shape shape) { return params_.add(name, ad::Tensor(shape)); };
    idx_.embedding = add("embedding", {V, E});
    idx_.enc_fw_W = add("enc.fw.W", {4 * H, E + H});
    idx_.enc_fw_b = add("enc.fw.b", {4 * H});
    idx_.enc_bw_W = add("enc.bw.W", {4 * H, E + H});
    idx_.enc_bw_b = add("enc.bw.b", {4 * H});
    idx_.bridge_W_h = add("bridge.W_h", {H, D});
    idx_.bridge_b_h = add("bridge.b_h", {H});
    idx_.bridge_W_c = add("bridge.W_c", {H, D});
    idx_.bridge_b_c = add("bridge.b_c", {H});
    idx_.dec_W = add("dec.W", {4 * H, E + H});
    idx_.dec_b = add("dec.b", {4 * H});
    idx_.attn_W_h = add("attn.W_h", {A, D});
    idx_.attn_W_s = add("attn.W_s", {A, H});
    idx_.attn_w_c = add("attn.w_c", {A});
    idx_.attn_b = add("attn.b_attn", {A});
    idx_.attn_v = add("attn.v", {A});
    idx_.out_V = add("out.V", {H, H + D});
    idx_.out_b = add("out.b", {H});
    idx_.out_V2 = add("out.V_prime", {V, H});
    idx_.out_b2 = add("out.b_prime", {V});
    idx_.ptr_w_h = add("ptr.w_h", {D});
    idx_.ptr_w_s = add("ptr.w_s", {H});
    idx_.ptr_w_x = add("ptr.w_x", {E});
    idx_.ptr_b = add("ptr.b_ptr", {});
    params_.init_uniform(seed);
  }

  const GeneratorDims& dims() const noexcept { return dims_; }
  const Index& index() const noexcept { return idx_; }
  ad::ParameterSet& params() noexcept { return params_; }
  const ad::ParameterSet& params() const noexcept { return params_; }

 private:
  GeneratorDims dims_;
  ad::ParameterSet params_;
  Index idx_{};
};

/// Graph leaves for every generator parameter.
struct GeneratorVars {
  GeneratorDims dims;
  ad::Var embedding;
  ad::Var enc_fw_W, enc_fw_b, enc_bw_W, enc_bw_b;
  ad::Var bridge_W_h, bridge_b_h, bridge_W_c, bridge_b_c;
  ad::Var dec_W, dec_b;
  ad::Var attn_W_h, attn_W_s, attn_w_c, attn_b, attn_v;
  ad::Var out_V, out_b, out_V2, out_b2;
  ad::Var ptr_w_h, ptr_w_s, ptr_w_x, ptr_b;
};

namespace detail {

template <class Leaf>
GeneratorVars bind_with(const GeneratorModel& m, Leaf leaf) {
  const auto& i = m.index();
  GeneratorVars v;
  v.dims = m.dims();
  v.embedding = leaf(i.embedding);
  v.enc_fw_W = leaf(i.enc_fw_W);
  v.enc_fw_b = leaf(i.enc_fw_b);
  v.enc_bw_W = leaf(i.enc_bw_W);
  v.enc_bw_b = leaf(i.enc_bw_b);
  v.bridge_W_h = leaf(i.bridge_W_h);
  v.bridge_b_h = leaf(i.bridge_b_h);
  v.bridge_W_c = leaf(i.bridge_W_c);
  v.bridge_b_c = leaf(i.bridge_b_c);
  v.dec_W = leaf(i.dec_W);
  v.dec_b = leaf(i.dec_b);
  v.attn_W_h = leaf(i.attn_W_h);
  v.attn_W_s = leaf(i.attn_W_s);
  v.attn_w_c = leaf(i.attn_w_c);
  v.attn_b = leaf(i.attn_b);
  v.attn_v = leaf(i.attn_v);
  v.out_V = leaf(i.out_V);
  v.out_b = leaf(i.out_b);
  v.out_V2 = leaf(i.out_V2);
  v.out_b2 = leaf(i.out_b2);
  v.ptr_w_h = leaf(i.ptr_w_h);
  v.ptr_w_s = leaf(i.ptr_w_s);
  v.ptr_w_x = leaf(i.ptr_w_x);
  v.ptr_b = leaf(i.ptr_b);
  return v;
}

}  // namespace detail

/// Binds parameters as trainable leaves; backward accumulates into the model's grads.
inline GeneratorVars bind_trainable(ad::Graph& g, GeneratorModel& m) {
  return detail::bind_with(m, [&](std::size_t i) { return g.param(m.params()[i]); });
}

/// Binds parameter values as constants (decoding only).
inline GeneratorVars bind_frozen(ad::Graph& g, const GeneratorModel& m) {
  return detail::bind_with(m, [&](std::size_t i) { return g.constant(m.params()[i].value); });
}

struct LstmState {
  ad::Var h;
  ad::Var c;
};

/// One LSTM step with gates ordered (input, forget, cell, output):
///   [i f g o] = W [x; h] + b,  c' = s(f) c + s(i) tanh(g),  h' = s(o) tanh(c').
inline LstmState lstm_cell(ad::Var W, ad::Var b, ad::Var x, const LstmState& prev) {
  using namespace ad;
  Var gates = add(matmul(W, concat({x, prev.h})), b);
  auto q = split(gates, 4);
  Var c = add(mul(sigmoid(q[1]), prev.c), mul(sigmoid(q[0]), tanh(q[2])));
  Var h = mul(sigmoid(q[3]), tanh(c));
  return {h, c};
}

struct EncoderOutput {
  ad::Var states;    // [L, 2H]: forward and backward hidden states per position
  ad::Var features;  // [L, A]: W_h h_i, shared by every decoder step
  std::vector<ad::Var> forward;
  std::vector<ad::Var> backward;
  LstmState decoder_init;
  std::size_t length = 0;
};

inline EncoderOutput encode(const GeneratorVars& v, std::span<const std::size_t> src_ids) {
  using namespace ad;
  if (src_ids.empty()) throw Error("encode: empty source sequence");
  Graph& g = *v.embedding.graph;
  const std::size_t L = src_ids.size(), H = v.dims.hidden_dim;
  std::vector<Var> x;
  x.reserve(L);
  for (std::size_t id : src_ids) x.push_back(row(v.embedding, id));

  EncoderOutput out;
  out.length = L;
  out.forward.resize(L);
  out.backward.resize(L);
  const LstmState zero{g.constant(Tensor(Shape{H})), g.constant(Tensor(Shape{H}))};
  LstmState fw = zero, bw = zero;
  for (std::size_t i = 0; i < L; ++i) {
    fw = lstm_cell(v.enc_fw_W, v.enc_fw_b, x[i], fw);
    out.forward[i] = fw.h;
  }
  for (std::size_t i = L; i-- > 0;) {
    bw = lstm_cell(v.enc_bw_W, v.enc_bw_b, x[i], bw);
    out.backward[i] = bw.h;
  }
  std::vector<Var> rows;
  rows.reserve(L);
  for (std::size_t i = 0; i < L; ++i) rows.push_back(concat({out.forward[i], out.backward[i]}));
  out.states = stack_rows(rows);
  out.features = matmul(out.states, transpose(v.attn_W_h));

  // Final states of both directions, projected to the decoder size.
  Var last_h = concat({fw.h, bw.h});
  Var last_c = concat({fw.c, bw.c});
  out.decoder_init = {add(matmul(v.bridge_W_h, last_h), v.bridge_b_h),
                      add(matmul(v.bridge_W_c, last_c), v.bridge_b_c)};
  return out;
}

/// Running sum of past attention vectors; zeros(length) for an empty history.
inline ad::Tensor coverage_update(std::span<const ad::Tensor> history, std::size_t length) {
  ad::Tensor c(ad::Shape{length});
  for (const auto& a : history) c += a;
  return c;
}

struct Attention {
  ad::Var weights;  // a_t over source positions
  ad::Var context;  // h*_t
};

/// a = softmax(e), h* = sum_i a_i h_i.
inline Attention attention_from_scores(ad::Var scores, ad::Var states) {
  ad::Var a = ad::softmax(scores);
  return {a, ad::matmul(a, states)};
}

/// e_i = v . tanh(W_h h_i + W_s s_t + w_c c_i + b_attn), then attention_from_scores.
inline Attention attend(const GeneratorVars& v, const EncoderOutput& enc, ad::Var s_t,
                        ad::Var coverage) {
  using namespace ad;
  Var dec = add(matmul(v.attn_W_s, s_t), v.attn_b);
  Var pre = tanh(add(add(enc.features, outer(coverage, v.attn_w_c)), dec));
  return attention_from_scores(matmul(pre, v.attn_v), enc.states);
}

struct OutputDistribution {
  ad::Var o_t;      // V [s_t; h*] + b, also the baseline's feature
  ad::Var p_vocab;  // softmax over the base vocabulary
  ad::Var p_gen;    // scalar in (0, 1)
  ad::Var p_w;      // over the extended vocabulary
};

/// P(w) = p_gen P_vocab(w) + (1 - p_gen) sum_{i: w_i = w} a_i.
/// `src_ext_ids` are the article's extended ids; `ext_size` is |vocab| + |article OOVs|.
/// A fixed `p_gen_override` replaces the learned switch.
inline OutputDistribution output_distribution(const GeneratorVars& v, ad::Var s_t, ad::Var h_star,
                                              ad::Var x_t, ad::Var a_t,
                                              const std::vector<std::size_t>& src_ext_ids,
                                              std::size_t ext_size,
                                              std::optional<double> p_gen_override = std::nullopt) {
  using namespace ad;
  Graph& g = *s_t.graph;
  OutputDistribution d;
  d.o_t = add(matmul(v.out_V, concat({s_t, h_star})), v.out_b);
  d.p_vocab = softmax(add(matmul(v.out_V2, d.o_t), v.out_b2));
  if (p_gen_override) {
    d.p_gen = g.constant(Tensor::scalar(*p_gen_override));
  } else {
    d.p_gen = sigmoid(add_n({dot(v.ptr_w_h, h_star), dot(v.ptr_w_s, s_t), dot(v.ptr_w_x, x_t), v.ptr_b}));
  }
  Var generate = mul(d.p_gen, pad_end(d.p_vocab, ext_size));
  Var copy = mul(affine(d.p_gen, -1.0, 1.0), scatter_add(a_t, src_ext_ids, ext_size));
  d.p_w = add(generate, copy);
  return d;
}

struct DecoderState {
  LstmState lstm;
  ad::Var coverage;  // c_t: sum of attention from all earlier steps
};

struct DecoderStep {
  ad::Var x_t;
  ad::Var s_t;
  ad::Var a_t;
  ad::Var h_star;
  ad::Var c_t;
  ad::Var p_gen;
  ad::Var p_vocab;
  ad::Var p_w;
  ad::Var o_t;
  DecoderState next;
};

inline DecoderState initial_state(const EncoderOutput& enc) {
  ad::Graph& g = *enc.states.graph;
  return {enc.decoder_init, g.constant(ad::Tensor(ad::Shape{enc.length}))};
}

/// One decoder step fed the previously emitted extended id (BOS at step 0).
inline DecoderStep decode_step(const GeneratorVars& v, const EncoderOutput& enc,
                               const EncodedPair& ex, const DecoderState& state,
                               std::size_t prev_ext_id,
                               std::optional<double> p_gen_override = std::nullopt) {
  using namespace ad;
  DecoderStep s;
  s.x_t = row(v.embedding, ex.ext.input_id(prev_ext_id));
  LstmState next = lstm_cell(v.dec_W, v.dec_b, s.x_t, state.lstm);
  s.s_t = next.h;
  s.c_t = state.coverage;
  Attention att = attend(v, enc, s.s_t, s.c_t);
  s.a_t = att.weights;
  s.h_star = att.context;
  OutputDistribution d =
      output_distribution(v, s.s_t, s.h_star, s.x_t, s.a_t, ex.src_ext_ids, ex.ext.size(), p_gen_override);
  s.o_t = d.o_t;
  s.p_vocab = d.p_vocab;
  s.p_gen = d.p_gen;
  s.p_w = d.p_w;
  s.next = {next, add(state.coverage, s.a_t)};
  return s;
}

/// sum_i min(a_i, c_i)
inline ad::Var coverage_penalty(ad::Var a_t, ad::Var c_t) { return ad::sum(ad::minimum(a_t, c_t)); }

struct MlLoss {
  ad::Var loss;
  std::vector<DecoderStep> steps;
  std::vector<std::size_t> floored_steps;  // steps whose gold probability hit the log floor
};

/// Teacher-forced loss over the gold headline plus EOS:
///   (1/T) sum_t [ -log P(y_t) + lambda sum_i min(a_i^t, c_i^t) ]
/// The coverage term is a penalty on re-attending.
inline MlLoss ml_loss(const GeneratorVars& v, const EncoderOutput& enc, const EncodedPair& ex,
                      double lambda) {
  using namespace ad;
  if (lambda < 0) throw Error("ml_loss: lambda must be nonnegative");
  const auto inputs = ex.decoder_inputs();
  const auto targets = ex.decoder_targets();
  MlLoss out;
  std::vector<Var> terms;
  DecoderState state = initial_state(enc);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    DecoderStep s = decode_step(v, enc, ex, state, inputs[t]);
    Var p_gold = pick(s.p_w, targets[t]);
    if (p_gold.item() <= kLogFloor) out.floored_steps.push_back(t);
    Var nll = scale(log_floor(p_gold), -1.0);
    terms.push_back(lambda > 0 ? add(nll, scale(coverage_penalty(s.a_t, s.c_t), lambda)) : nll);
    state = s.next;
    out.steps.push_back(std::move(s));
  }
  out.loss = scale(add_n(terms), 1.0 / static_cast<double>(targets.size()));
  return out;
}

inline MlLoss ml_loss(const GeneratorVars& v, const EncodedPair& ex, double lambda) {
  return ml_loss(v, encode(v, ex.src_ids), ex, lambda);
}

struct SampleTrace {
  std::vector<std::size_t> ids;       // extended ids, ending with EOS unless max_len was hit
  std::vector<ad::Var> log_probs;     // log P(w_t) of each emitted id
  std::vector<ad::Var> features;      // o_t of each step
  std::vector<double> log_prob_values;
};

/// Ancestral sampling from P(w) until EOS or `max_len` tokens.
inline SampleTrace sample(const GeneratorVars& v, const EncoderOutput& enc, const EncodedPair& ex,
                          std::size_t max_len, Rng& rng) {
  using namespace ad;
  if (max_len == 0) throw Error("sample: max_len must be >= 1");
  SampleTrace tr;
  DecoderState state = initial_state(enc);
  std::size_t prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    DecoderStep s = decode_step(v, enc, ex, state, prev);
    const std::size_t id = sample_categorical(s.p_w.value().data(), rng);
    Var lp = log_floor(pick(s.p_w, id));
    tr.ids.push_back(id);
    tr.log_probs.push_back(lp);
    tr.features.push_back(s.o_t);
    tr.log_prob_values.push_back(lp.item());
    if (id == Vocabulary::kEos) break;
    state = s.next;
    prev = id;
  }
  return tr;
}

/// Sampling on a frozen copy of the parameters.
inline SampleTrace sample(const GeneratorModel& model, const EncodedPair& ex, std::size_t max_len,
                          std::uint64_t seed) {
  ad::Graph g;
  GeneratorVars v = bind_frozen(g, model);
  Rng rng(seed);
  SampleTrace tr = sample(v, encode(v, ex.src_ids), ex, max_len, rng);
  tr.log_probs.clear();
  tr.features.clear();
  return tr;
}

struct BeamHypothesis {
  std::vector<std::size_t> tokens;  // extended ids; finished hypotheses end with EOS
  double log_prob = 0.0;            // sum of per-step log P(w)
  DecoderState state;
  ad::Tensor coverage;

  bool finished() const { return !tokens.empty() && tokens.back() == Vocabulary::kEos; }
};

/// Length-unnormalized beam search. Returns the best finished hypothesis, or
/// the best unfinished one when none finished within `max_len` steps.
inline BeamHypothesis beam_search(const GeneratorModel& model, const EncodedPair& ex,
                                  std::size_t beam, std::size_t max_len) {
  using namespace ad;
  if (beam == 0) throw Error("beam_search: beam must be >= 1");
  if (max_len == 0) throw Error("beam_search: max_len must be >= 1");
  Graph g;
  const GeneratorVars v = bind_frozen(g, model);
  const EncoderOutput enc = encode(v, ex.src_ids);

  BeamHypothesis root;
  root.state = initial_state(enc);
  root.coverage = root.state.coverage.value();
  std::vector<BeamHypothesis> live{root};
  std::vector<BeamHypothesis> finished;

  struct Candidate {
    std::size_t parent;
    std::size_t token;
    double score;
  };
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    std::vector<DecoderStep> steps;
    steps.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      const std::size_t prev = live[h].tokens.empty() ? Vocabulary::kBos : live[h].tokens.back();
      steps.push_back(decode_step(v, enc, ex, live[h].state, prev));
      const auto p = steps.back().p_w.value().data();
      for (std::size_t w = 0; w < p.size(); ++w) {
        cands.push_back({h, w, live[h].log_prob + std::log(p[w])});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<BeamHypothesis> next;
    for (const Candidate& c : cands) {
      BeamHypothesis hyp;
      hyp.tokens = live[c.parent].tokens;
      hyp.tokens.push_back(c.token);
      hyp.log_prob = c.score;
      hyp.state = steps[c.parent].next;
      hyp.coverage = hyp.state.coverage.value();
      if (c.token == Vocabulary::kEos) {
        finished.push_back(std::move(hyp));
      } else {
        next.push_back(std::move(hyp));
        if (next.size() == beam) break;
      }
    }
    live = std::move(next);
    if (finished.size() >= beam) break;
  }
  const auto& pool = finished.empty() ? live : finished;
  const auto best = std::max_element(pool.begin(), pool.end(),
                                     [](const auto& a, const auto& b) { return a.log_prob < b.log_prob; });
  return *best;
}

/// Argmax decoding until EOS or `max_len` tokens.
inline std::vector<std::size_t> greedy_decode(const GeneratorModel& model, const EncodedPair& ex,
                                              std::size_t max_len) {
  ad::Graph g;
  const GeneratorVars v = bind_frozen(g, model);
  const EncoderOutput enc = encode(v, ex.src_ids);
  DecoderState state = initial_state(enc);
  std::vector<std::size_t> out;
  std::size_t prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    DecoderStep s = decode_step(v, enc, ex, state, prev);
    const auto p = s.p_w.value().data();
    prev = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    out.push_back(prev);
    if (prev == Vocabulary::kEos) break;
    state = s.next;
  }
  return out;
}

/// Beam-decoded headline rendered as tokens; copied OOVs appear as article words.
inline TokenSeq generate_headline(const GeneratorModel& model, const EncodedPair& ex,
                                  std::size_t beam, std::size_t max_len) {
  return decode_ids(beam_search(model, ex, beam, max_len).tokens, ex.ext);
}

}  // namespace hlgen
