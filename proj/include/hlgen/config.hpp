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

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hlgen/error.hpp"
#include "hlgen/rltrain.hpp"

// Schema-checked `key = value` experiment configuration.
namespace hlgen {

enum class ValueType { integer, real, text, choice };

struct ConfigKey {
  std::string name;
  ValueType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices{};
};

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", ValueType::integer, "1", "single source of all randomness"},
      {"vocab_size", ValueType::integer, "5000", "base vocabulary size including 4 reserved ids"},
      {"max_article_len", ValueType::integer, "400", "article truncation length"},
      {"emb_dim", ValueType::integer, "16", "generator embedding size E"},
      {"hidden_dim", ValueType::integer, "32", "generator hidden size H"},
      {"disc_emb_dim", ValueType::integer, "16", "discriminator embedding size"},
      {"disc_filters", ValueType::integer, "32", "filters per convolution width"},
      {"batch_size", ValueType::integer, "16", "examples per step"},
      {"ml_lr", ValueType::real, "0.0001", "ML learning rate"},
      {"rl_lr", ValueType::real, "0.0001", "RL generator learning rate"},
      {"baseline_lr", ValueType::real, "0.001", "baseline regressor learning rate"},
      {"disc_lr", ValueType::real, "0.001", "discriminator learning rate"},
      {"optimizer", ValueType::choice, "adam", "generator optimizer", {"adam", "sgd"}},
      {"clip_norm", ValueType::real, "2.0", "global gradient norm bound; <= 0 disables"},
      {"lambda", ValueType::real, "1.0", "coverage loss weight"},
      {"alpha", ValueType::real, "0.97", "RL weight in the mixed objective"},
      {"beta", ValueType::real, "2000", "ROUGE-RP / discriminator balance"},
      {"reward", ValueType::choice, "rouge_rp_adv", "RL reward",
       {"rouge", "rouge_rp", "rouge_rp_adv"}},
      {"disc_mode", ValueType::choice, "continual", "discriminator updates during RL",
       {"continual", "frozen"}},
      {"beam", ValueType::integer, "5", "beam width"},
      {"max_dec_len", ValueType::integer, "12", "maximum decoded headline length"},
      {"ml_epochs", ValueType::integer, "20", "maximum ML epochs"},
      {"patience", ValueType::integer, "2", "ML epochs tolerated without dev improvement"},
      {"disc_epochs", ValueType::integer, "1", "discriminator pretraining epochs"},
      {"rl_steps", ValueType::integer, "200", "RL generator steps"},
      {"corpus", ValueType::text, "", "tokenized training corpus"},
      {"dev_corpus", ValueType::text, "", "tokenized dev corpus for early stopping"},
      {"vocab", ValueType::text, "", "vocabulary file"},
      {"ml_checkpoint", ValueType::text, "ml.ckpt", "ML phase checkpoint"},
      {"disc_checkpoint", ValueType::text, "disc.ckpt", "discriminator checkpoint"},
      {"rl_checkpoint", ValueType::text, "rl.ckpt", "RL phase checkpoint"},
      {"baseline_checkpoint", ValueType::text, "baseline.ckpt", "baseline regressor checkpoint"},
      {"log", ValueType::text, "", "training log, appended; empty for none"},
  };
  return schema;
}

inline const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_schema())
    if (k.name == name) return &k;
  return nullptr;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Every schema key with a validated value; defaults fill the gaps.
class Config {
 public:
  Config() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  void set(const std::string& key, const std::string& value) {
    const ConfigKey* k = find_key(key);
    if (!k) throw ConfigError("unknown config key: " + key);
    validate(*k, value);
    values_[key] = value;
    explicit_.insert(key);
  }

  /// True when `key` was given by a file or an override rather than defaulted.
  bool is_set(const std::string& key) const { return explicit_.count(key) > 0; }

  const std::string& text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
  }
  std::int64_t integer(const std::string& key) const { return std::stoll(text(key)); }
  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }
  double real(const std::string& key) const { return std::stod(text(key)); }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  GeneratorDims generator_dims(std::size_t vocab_size) const {
    return {vocab_size, size("emb_dim"), size("hidden_dim")};
  }
  DiscriminatorDims disc_dims(std::size_t vocab_size) const {
    return {vocab_size, size("disc_emb_dim"), size("disc_filters"), {1, 3, 5}};
  }
  ad::OptimizerKind optimizer() const {
    return text("optimizer") == "sgd" ? ad::OptimizerKind::sgd : ad::OptimizerKind::adam;
  }

  MlPhaseConfig ml_phase() const {
    MlPhaseConfig c;
    c.lr = real("ml_lr");
    c.lambda = real("lambda");
    c.clip_norm = real("clip_norm");
    c.batch_size = size("batch_size");
    c.max_epochs = size("ml_epochs");
    c.patience = size("patience");
    c.beam = size("beam");
    c.max_dec_len = size("max_dec_len");
    c.optimizer = optimizer();
    return c;
  }

  DiscPhaseConfig disc_phase() const {
    return {real("disc_lr"), size("batch_size"), size("disc_epochs"), size("max_dec_len")};
  }

  RlPhaseConfig rl_phase() const {
    RlPhaseConfig c;
    const std::string& r = text("reward");
    c.rl.reward_kind = r == "rouge"      ? RewardKind::rouge
                       : r == "rouge_rp" ? RewardKind::rouge_rp
                                         : RewardKind::rouge_rp_adv;
    c.rl.beta = real("beta");
    c.rl.alpha = real("alpha");
    c.rl.lambda = real("lambda");
    c.rl.gen_lr = real("rl_lr");
    c.rl.baseline_lr = real("baseline_lr");
    c.rl.disc_lr = real("disc_lr");
    c.rl.clip_norm = real("clip_norm");
    c.rl.max_dec_len = size("max_dec_len");
    c.rl.disc_mode = text("disc_mode") == "frozen" ? DiscUpdateMode::frozen : DiscUpdateMode::continual;
    c.rl.optimizer = optimizer();
    c.batch_size = size("batch_size");
    c.steps = size("rl_steps");
    return c;
  }

  /// Checks cross-key constraints that single-key validation cannot.
  void validate_all() const {
    if (size("vocab_size") <= Vocabulary::kNumReserved) throw ConfigError("vocab_size must exceed 4");
    for (const char* k : {"emb_dim", "hidden_dim", "disc_emb_dim", "disc_filters", "batch_size",
                          "beam", "max_dec_len", "max_article_len"}) {
      if (integer(k) < 1) throw ConfigError(std::string(k) + " must be >= 1");
    }
    rl_phase().rl.validate();
  }

 private:
  static void validate(const ConfigKey& k, const std::string& v) {
    auto bad = [&](const std::string& why) {
      return ConfigError("config key " + k.name + " = '" + v + "': " + why);
    };
    std::size_t used = 0;
    switch (k.type) {
      case ValueType::integer:
        try {
          const long long x = std::stoll(v, &used);
          if (x < 0) throw bad("must be nonnegative");
        } catch (const std::logic_error&) {
          throw bad("expected an integer");
        }
        if (used != v.size()) throw bad("expected an integer");
        break;
      case ValueType::real:
        try {
          (void)std::stod(v, &used);
        } catch (const std::logic_error&) {
          throw bad("expected a number");
        }
        if (used != v.size()) throw bad("expected a number");
        break;
      case ValueType::choice:
        for (const auto& c : k.choices)
          if (c == v) return;
        throw bad("not one of the allowed values");
      case ValueType::text:
        break;
    }
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

/// Applies `key = value` lines; `#` starts a comment. Errors carry the line number.
inline void read_config(std::istream& is, Config& cfg) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw FormatError("expected key = value", lineno);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw FormatError("missing key", lineno);
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw FormatError(e.what(), lineno);
    }
  }
}

inline void load_config(const std::string& path, Config& cfg) {
  std::ifstream is(path);
  if (!is) throw MissingPrerequisite("config not found: " + path);
  read_config(is, cfg);
}

inline void write_config(std::ostream& os, const Config& cfg) {
  for (const auto& [k, v] : cfg.values()) os << k << " = " << v << '\n';
}

}  // namespace hlgen
