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

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hlgen/autodiff.hpp"
#include "hlgen/config.hpp"
#include "hlgen/discriminator.hpp"
#include "hlgen/error.hpp"
#include "hlgen/generator.hpp"
#include "hlgen/reward.hpp"
#include "hlgen/rltrain.hpp"
#include "hlgen/textcore.hpp"

// Subcommand driver behind the `hlgen` executable.
namespace hlgen::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kFormat = 2,
  kMissingPrerequisite = 3,
  kCheckpointMismatch = 4,
  kAlignment = 5,
};

namespace detail {

/// Per-phase stream seeds derived from the single `seed` key.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed * 0x9E3779B97F4A7C15ull + stream;
}

enum Stream : std::uint64_t { kGenInit = 1, kDiscInit, kBaselineInit, kMl, kDisc, kRl, kSample };

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw MissingPrerequisite(what + " path not configured");
  if (!std::filesystem::exists(path)) throw MissingPrerequisite(what + " not found: " + path);
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw Error("cannot write " + path);
  return os;
}

/// Options shared by every subcommand: `--config FILE` and one `--<key>` per schema key.
struct ConfigOptions {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    for (const auto& k : config_schema()) {
      app->add_option("--" + k.name, overrides[k.name], k.help + " (default: " + k.default_value + ")");
    }
  }

  Config resolve(const CLI::App* app) const {
    Config cfg;
    if (!config_path.empty()) load_config(config_path, cfg);
    for (const auto& k : config_schema()) {
      if (app->count("--" + k.name) > 0) cfg.set(k.name, overrides.at(k.name));
    }
    cfg.validate_all();
    return cfg;
  }
};

// The vocabulary lives on the heap so encoded pairs keep a stable pointer to it.
struct Corpora {
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<ExamplePair> raw;
  std::vector<EncodedPair> encoded;
  std::vector<ExamplePair> dev_raw;
  std::vector<EncodedPair> dev_encoded;
};

inline Corpora load_training_data(const Config& cfg) {
  require_file(cfg.text("corpus"), "corpus");
  require_file(cfg.text("vocab"), "vocabulary");
  Corpora c;
  c.vocab = std::make_shared<const Vocabulary>(load_vocab(cfg.text("vocab")));
  c.raw = load_corpus(cfg.text("corpus"), cfg.size("max_article_len"));
  if (c.raw.empty()) throw Error("training corpus is empty: " + cfg.text("corpus"));
  for (const auto& p : c.raw) c.encoded.push_back(encode_with_pointer(p, *c.vocab));
  if (!cfg.text("dev_corpus").empty()) {
    require_file(cfg.text("dev_corpus"), "dev corpus");
    c.dev_raw = load_corpus(cfg.text("dev_corpus"), cfg.size("max_article_len"));
    for (const auto& p : c.dev_raw) c.dev_encoded.push_back(encode_with_pointer(p, *c.vocab));
  }
  return c;
}

inline GeneratorModel load_generator(const Config& cfg, std::size_t vocab_size, const std::string& path) {
  require_file(path, "generator checkpoint");
  GeneratorModel gen(cfg.generator_dims(vocab_size), stream_seed(cfg.seed(), kGenInit));
  ad::load_checkpoint(path, gen.params());
  return gen;
}

inline DiscriminatorModel load_discriminator(const Config& cfg, std::size_t vocab_size,
                                             const std::string& path) {
  require_file(path, "discriminator checkpoint");
  DiscriminatorModel disc(cfg.disc_dims(vocab_size), stream_seed(cfg.seed(), kDiscInit));
  ad::load_checkpoint(path, disc.params());
  return disc;
}

/// Training log sink: the configured file (appended) or `fallback`.
struct LogSink {
  std::ofstream file;
  std::ostream* stream;

  LogSink(const Config& cfg, std::ostream& fallback) : stream(&fallback) {
    if (!cfg.text("log").empty()) {
      file = open_out(cfg.text("log"), std::ios::app);
      stream = &file;
    }
  }
};

}  // namespace detail

inline int cmd_preprocess(const Config& cfg, const std::string& input, const std::string& out_dir,
                          std::ostream& out) {
  std::ifstream is(input);
  if (!is) throw MissingPrerequisite("input not found: " + input);
  const auto corpus = read_corpus(is, cfg.size("max_article_len"));
  const Vocabulary vocab = corpus.empty() ? Vocabulary{} : build_vocab(corpus, cfg.size("vocab_size"));
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  {
    auto os = detail::open_out((dir / "corpus.tsv").string(), std::ios::out | std::ios::binary);
    write_corpus(os, corpus);
  }
  {
    auto os = detail::open_out((dir / "vocab.txt").string(), std::ios::out | std::ios::binary);
    write_vocab(os, vocab);
  }
  out << "pairs=" << corpus.size() << " vocab_size=" << vocab.size() << '\n';
  return kOk;
}

inline int cmd_train(const Config& cfg, const std::string& phase, std::ostream& out) {
  using namespace detail;
  const Corpora data = load_training_data(cfg);
  const std::size_t V = data.vocab->size();
  LogSink sink(cfg, out);
  TrainLog log(sink.stream);

  if (phase == "ml") {
    GeneratorModel gen(cfg.generator_dims(V), stream_seed(cfg.seed(), kGenInit));
    Rng rng(stream_seed(cfg.seed(), kMl));
    const MlPhaseResult r =
        train_ml_phase(gen, data.encoded, data.dev_encoded, data.dev_raw, cfg.ml_phase(), rng, log);
    ad::save_checkpoint(cfg.text("ml_checkpoint"), gen.params());
    out << "phase=ml epochs=" << r.epochs_run << " best_epoch=" << r.best_epoch << " checkpoint="
        << cfg.text("ml_checkpoint") << '\n';
    return kOk;
  }
  if (phase == "disc") {
    const GeneratorModel gen = load_generator(cfg, V, cfg.text("ml_checkpoint"));
    DiscriminatorModel disc(cfg.disc_dims(V), stream_seed(cfg.seed(), kDiscInit));
    Rng rng(stream_seed(cfg.seed(), kDisc));
    const double loss =
        train_disc_phase(disc, gen, data.encoded, data.raw, *data.vocab, cfg.disc_phase(), rng, log);
    ad::save_checkpoint(cfg.text("disc_checkpoint"), disc.params());
    out << "phase=disc loss=" << loss << " checkpoint=" << cfg.text("disc_checkpoint") << '\n';
    return kOk;
  }
  if (phase == "rl") {
    GeneratorModel gen = load_generator(cfg, V, cfg.text("ml_checkpoint"));
    const RlPhaseConfig rc = cfg.rl_phase();
    std::optional<DiscriminatorModel> disc;
    if (rc.rl.reward_kind == RewardKind::rouge_rp_adv) {
      disc.emplace(load_discriminator(cfg, V, cfg.text("disc_checkpoint")));
    }
    BaselineRegressor baseline(cfg.size("hidden_dim"), stream_seed(cfg.seed(), kBaselineInit));
    Rng rng(stream_seed(cfg.seed(), kRl));
    const RlStepMetrics m = train_rl_phase(gen, baseline, disc ? &*disc : nullptr, data.encoded,
                                           data.raw, *data.vocab, rc, rng, log);
    ad::save_checkpoint(cfg.text("rl_checkpoint"), gen.params());
    ad::save_checkpoint(cfg.text("baseline_checkpoint"), baseline.params());
    out << "phase=rl reward_mean=" << m.reward_mean << " checkpoint=" << cfg.text("rl_checkpoint")
        << '\n';
    return kOk;
  }
  throw ConfigError("unknown training phase: " + phase);
}

inline int cmd_generate(const Config& cfg, const std::string& checkpoint, const std::string& input,
                        const std::string& output, std::ostream& out) {
  using namespace detail;
  require_file(cfg.text("vocab"), "vocabulary");
  const Vocabulary vocab = load_vocab(cfg.text("vocab"));
  const GeneratorModel gen = load_generator(cfg, vocab.size(), checkpoint);
  std::ifstream is(input);
  if (!is) throw MissingPrerequisite("input not found: " + input);
  std::ostringstream result;
  std::string line;
  while (std::getline(is, line)) {
    ExamplePair p = make_example(line, "", cfg.size("max_article_len"));
    if (p.article.empty()) p.article.push_back("<unk>");
    const EncodedPair ex = encode_with_pointer(p, vocab);
    result << join(generate_headline(gen, ex, cfg.size("beam"), cfg.size("max_dec_len"))) << '\n';
  }
  if (output.empty()) {
    out << result.str();
  } else {
    auto os = open_out(output);
    os << result.str();
  }
  return kOk;
}

inline int cmd_eval(const Config& cfg, const std::string& hyps_path, const std::string& refs_path,
                    const std::string& articles_path, const std::string& disc_path, bool table,
                    std::ostream& out) {
  using namespace detail;
  const auto hyps = load_lines(hyps_path);
  const auto refs = load_lines(refs_path);
  std::vector<TokenSeq> articles;
  std::optional<Vocabulary> vocab;
  std::optional<DiscriminatorModel> disc;
  HeadlineScorer scorer;
  if (!disc_path.empty()) {
    if (articles_path.empty()) throw MissingPrerequisite("discriminator scoring needs --articles");
    require_file(cfg.text("vocab"), "vocabulary");
    vocab.emplace(load_vocab(cfg.text("vocab")));
    disc.emplace(load_discriminator(cfg, vocab->size(), disc_path));
    articles = load_lines(articles_path);
    scorer = [&](const TokenSeq& a, const TokenSeq& h) {
      return h.empty() ? 0.0 : d_score(*disc, *vocab, a, h);
    };
  }
  const CorpusReport report = score_corpus(hyps, refs, articles, scorer, cfg.real("beta"));
  if (table) {
    write_report_table(out, report);
  } else {
    write_report_kv(out, report);
  }
  return kOk;
}

inline int cmd_score(const Config& cfg, const std::string& hyp, const std::string& ref,
                     const std::string& article, const std::string& disc_path, std::ostream& out) {
  using namespace detail;
  HeadlineScorer scorer;
  std::optional<Vocabulary> vocab;
  std::optional<DiscriminatorModel> disc;
  if (!disc_path.empty()) {
    require_file(cfg.text("vocab"), "vocabulary");
    vocab.emplace(load_vocab(cfg.text("vocab")));
    disc.emplace(load_discriminator(cfg, vocab->size(), disc_path));
    scorer = [&](const TokenSeq& a, const TokenSeq& h) { return d_score(*disc, *vocab, a, h); };
  }
  RewardKind kind = scorer ? RewardKind::rouge_rp_adv : RewardKind::rouge_rp;
  if (cfg.is_set("reward")) kind = cfg.rl_phase().rl.reward_kind;
  if (kind == RewardKind::rouge_rp_adv && !scorer) {
    throw MissingPrerequisite("reward rouge_rp_adv needs a discriminator checkpoint");
  }
  write_breakdown(out, compute_reward(tokenize(hyp), tokenize(ref), tokenize(article), kind,
                                      cfg.real("beta"), scorer));
  return kOk;
}

/// Runs the command line `args` (program name excluded). Returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Headline generation with repetition-aware adversarial rewards", "hlgen"};
  app.require_subcommand(1);

  auto* pre = app.add_subcommand("preprocess", "tokenize a raw corpus and build the vocabulary");
  auto* train = app.add_subcommand("train", "run one training phase: ml, disc or rl");
  auto* gen = app.add_subcommand("generate", "beam-decode one headline per article line");
  auto* eval = app.add_subcommand("eval", "corpus ROUGE-1/2/L and repetition-rate report");
  auto* score = app.add_subcommand("score", "reward breakdown for a single headline");

  detail::ConfigOptions pre_cfg, train_cfg, gen_cfg, eval_cfg, score_cfg;
  std::string input, out_dir, phase, checkpoint, output, hyps, refs, articles, disc, hyp, ref, article;
  bool table = false;

  pre_cfg.attach(pre);
  pre->add_option("--input", input, "raw `article<TAB>headline` file")->required();
  pre->add_option("--out-dir", out_dir, "output directory for corpus.tsv and vocab.txt")->required();

  train_cfg.attach(train);
  train->add_option("phase", phase, "ml | disc | rl")
      ->required()
      ->check(CLI::IsMember({"ml", "disc", "rl"}));

  gen_cfg.attach(gen);
  gen->add_option("--checkpoint", checkpoint, "generator checkpoint")->required();
  gen->add_option("--input", input, "one raw article per line")->required();
  gen->add_option("--output", output, "headline file; stdout when omitted");

  eval_cfg.attach(eval);
  eval->add_option("--hyps", hyps, "generated headlines, one per line")->required();
  eval->add_option("--refs", refs, "reference headlines, one per line")->required();
  eval->add_option("--articles", articles, "articles, one per line (with --disc-checkpoint)");
  eval->add_option("--disc-checkpoint", disc, "discriminator checkpoint for D(A,H)");
  eval->add_flag("--table", table, "human-readable table instead of key=value lines");

  score_cfg.attach(score);
  score->add_option("--hyp", hyp, "generated headline")->required();
  score->add_option("--ref", ref, "reference headline")->required();
  score->add_option("--article", article, "source article");
  score->add_option("--disc-checkpoint", disc, "discriminator checkpoint for D(A,H)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }

  try {
    if (pre->parsed()) return cmd_preprocess(pre_cfg.resolve(pre), input, out_dir, out);
    if (train->parsed()) return cmd_train(train_cfg.resolve(train), phase, out);
    if (gen->parsed()) return cmd_generate(gen_cfg.resolve(gen), checkpoint, input, output, out);
    if (eval->parsed()) return cmd_eval(eval_cfg.resolve(eval), hyps, refs, articles, disc, table, out);
    if (score->parsed()) return cmd_score(score_cfg.resolve(score), hyp, ref, article, disc, out);
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const MissingPrerequisite& e) {
    err << "missing prerequisite: " << e.what() << '\n';
    return kMissingPrerequisite;
  } catch (const CheckpointMismatch& e) {
    err << "checkpoint mismatch: " << e.what() << '\n';
    return kCheckpointMismatch;
  } catch (const AlignmentError& e) {
    err << "alignment error: " << e.what() << '\n';
    return kAlignment;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace hlgen::cli
