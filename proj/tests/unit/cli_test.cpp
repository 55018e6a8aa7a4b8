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

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "hlgen/cli.hpp"
#include "support/toy.hpp"

using namespace hlgen;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh scratch directory per test case, removed on destruction.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("hlgen_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string path(const std::string& f) const { return (dir / f).string(); }
  std::string write(const std::string& f, const std::string& content) const {
    std::ofstream(dir / f, std::ios::binary) << content;
    return path(f);
  }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string toy_raw_corpus(std::size_t pairs, std::uint64_t seed) {
  std::ostringstream os;
  write_corpus(os, testing::copy_corpus(pairs, 8, seed));
  return os.str();
}

// Small-model config shared by the training tests.
std::string tiny_config(const Scratch& s) {
  return "seed = 5\nvocab_size = 40\nemb_dim = 4\nhidden_dim = 6\ndisc_emb_dim = 4\ndisc_filters = 3\n"
         "batch_size = 4\nml_lr = 0.01\nml_epochs = 2\nbeam = 2\nmax_dec_len = 5\nrl_steps = 2\n"
         "corpus = " + s.path("prep/corpus.tsv") + "\nvocab = " + s.path("prep/vocab.txt") +
         "\nml_checkpoint = " + s.path("ml.ckpt") + "\ndisc_checkpoint = " + s.path("disc.ckpt") +
         "\nrl_checkpoint = " + s.path("rl.ckpt") + "\nbaseline_checkpoint = " + s.path("baseline.ckpt") +
         "\nlog = " + s.path("train.log") + "\n";
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"train", "nonsense"}).code == 1);
}

TEST_CASE("preprocess on an empty corpus writes the reserved vocabulary") {
  Scratch s("empty");
  const std::string in = s.write("raw.tsv", "");
  const Result r = run({"preprocess", "--input", in, "--out-dir", s.path("out")});
  CHECK(r.code == 0);
  CHECK(r.out == "pairs=0 vocab_size=4\n");
  CHECK(slurp(s.path("out/corpus.tsv")).empty());
  CHECK(load_vocab(s.path("out/vocab.txt")).size() == 4);
}

TEST_CASE("preprocess reruns are byte-identical") {
  Scratch s("rerun");
  const std::string in = s.write("raw.tsv", "The Cat sat.\tcat sits\nA dog ran 42 miles\tdog runs\n");
  REQUIRE(run({"preprocess", "--input", in, "--out-dir", s.path("a")}).code == 0);
  REQUIRE(run({"preprocess", "--input", in, "--out-dir", s.path("b")}).code == 0);
  CHECK(slurp(s.path("a/corpus.tsv")) == slurp(s.path("b/corpus.tsv")));
  CHECK(slurp(s.path("a/vocab.txt")) == slurp(s.path("b/vocab.txt")));
  CHECK(slurp(s.path("a/corpus.tsv")).find("## miles") != std::string::npos);
}

TEST_CASE("preprocess reports the malformed line") {
  Scratch s("malformed");
  std::string raw;
  for (int i = 0; i < 6; ++i) raw += "a b\tc\n";
  raw += "no tab on this line\n";
  const Result r = run({"preprocess", "--input", s.write("raw.tsv", raw), "--out-dir", s.path("o")});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 7") != std::string::npos);
  CHECK(run({"preprocess", "--input", s.path("missing.tsv"), "--out-dir", s.path("o")}).code == 3);
}

TEST_CASE("config errors") {
  Scratch s("config");
  const std::string in = s.write("raw.tsv", "a\tb\n");
  const std::string bad = s.write("bad.cfg", "seed = 1\nbeam = 5\n\n\n\n\nbeam five\n");
  const Result r = run({"preprocess", "--config", bad, "--input", in, "--out-dir", s.path("o")});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 7") != std::string::npos);
  CHECK(run({"preprocess", "--config", s.path("none.cfg"), "--input", in, "--out-dir", s.path("o")}).code == 3);
  CHECK(run({"preprocess", "--alpha", "2", "--input", in, "--out-dir", s.path("o")}).code == 1);
}

TEST_CASE("train phases need their prerequisites") {
  Scratch s("prereq");
  const std::string cfg = s.write("run.cfg", tiny_config(s));
  CHECK(run({"train", "ml", "--config", cfg}).code == 3);
  REQUIRE(run({"preprocess", "--input", s.write("raw.tsv", toy_raw_corpus(8, 1)), "--out-dir", s.path("prep")})
              .code == 0);
  CHECK(run({"train", "rl", "--config", cfg}).code == 3);
  CHECK(run({"train", "disc", "--config", cfg}).code == 3);
  REQUIRE(run({"train", "ml", "--config", cfg}).code == 0);
  // Default reward needs the discriminator checkpoint.
  CHECK(run({"train", "rl", "--config", cfg}).code == 3);
  CHECK(run({"train", "rl", "--config", cfg, "--reward", "rouge_rp"}).code == 0);
}

TEST_CASE("full pipeline and seeded determinism") {
  Scratch s("pipeline");
  const std::string cfg = s.write("run.cfg", tiny_config(s));
  REQUIRE(run({"preprocess", "--input", s.write("raw.tsv", toy_raw_corpus(12, 2)), "--out-dir", s.path("prep")})
              .code == 0);
  std::vector<std::string> first;
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove(s.path("train.log"));
    REQUIRE(run({"train", "ml", "--config", cfg}).code == 0);
    REQUIRE(run({"train", "disc", "--config", cfg}).code == 0);
    REQUIRE(run({"train", "rl", "--config", cfg}).code == 0);
    std::vector<std::string> bytes;
    for (const char* f : {"ml.ckpt", "disc.ckpt", "rl.ckpt", "baseline.ckpt", "train.log"}) {
      bytes.push_back(slurp(s.path(f)));
      CHECK_FALSE(bytes.back().empty());
    }
    if (rep == 0) {
      first = bytes;
    } else {
      CHECK(bytes == first);
    }
  }
  const std::string log = slurp(s.path("train.log"));
  CHECK(log.find("phase=ml") != std::string::npos);
  CHECK(log.find("phase=disc") != std::string::npos);
  CHECK(log.find("step=1 phase=rl reward_mean=") != std::string::npos);
  CHECK(log.find("d_score=") != std::string::npos);

  // An override changes the run: a different seed gives different weights.
  REQUIRE(run({"train", "ml", "--config", cfg, "--seed", "6"}).code == 0);
  CHECK(slurp(s.path("ml.ckpt")) != first[0]);
}

TEST_CASE("generate: defaults, determinism, copying and mismatches") {
  Scratch s("generate");
  const std::string cfg = s.write("run.cfg", tiny_config(s));
  REQUIRE(run({"preprocess", "--input", s.write("raw.tsv", toy_raw_corpus(8, 3)), "--out-dir", s.path("prep")})
              .code == 0);
  REQUIRE(run({"train", "ml", "--config", cfg}).code == 0);
  const std::string articles = s.write("articles.txt", "wa wb wc wd we\nzebra wb zebra\n");
  const Result a = run({"generate", "--config", cfg, "--checkpoint", s.path("ml.ckpt"), "--input", articles});
  const Result b = run({"generate", "--config", cfg, "--checkpoint", s.path("ml.ckpt"), "--input", articles});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  std::istringstream lines(a.out);
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    CHECK(line.find("<unk>") == std::string::npos);
  }
  CHECK(n == 2);

  REQUIRE(run({"generate", "--config", cfg, "--checkpoint", s.path("ml.ckpt"), "--input", articles, "--output",
               s.path("h.txt")})
              .code == 0);
  CHECK(slurp(s.path("h.txt")) == a.out);

  // The beam width defaults to 5 when the config does not set it.
  const std::string no_beam = s.write("nobeam.cfg", "vocab = " + s.path("prep/vocab.txt") +
                                                        "\nemb_dim = 4\nhidden_dim = 6\nmax_dec_len = 5\n");
  const Result d5 = run({"generate", "--config", no_beam, "--checkpoint", s.path("ml.ckpt"), "--input", articles});
  const Result e5 = run({"generate", "--config", no_beam, "--beam", "5", "--checkpoint", s.path("ml.ckpt"),
                         "--input", articles});
  REQUIRE(d5.code == 0);
  CHECK(d5.out == e5.out);

  // Width-1 beam equals greedy decoding.
  const Vocabulary vocab = load_vocab(s.path("prep/vocab.txt"));
  GeneratorModel gen({vocab.size(), 4, 6}, 1);
  ad::load_checkpoint(s.path("ml.ckpt"), gen.params());
  const Result g1 = run({"generate", "--config", cfg, "--beam", "1", "--checkpoint", s.path("ml.ckpt"), "--input",
                         articles});
  const EncodedPair ex = encode_with_pointer({tokenize("wa wb wc wd we"), {}}, vocab);
  CHECK(g1.out.substr(0, g1.out.find('\n')) == join(decode_ids(greedy_decode(gen, ex, 5), ex.ext)));

  CHECK(run({"generate", "--config", cfg, "--hidden_dim", "7", "--checkpoint", s.path("ml.ckpt"), "--input",
             articles})
            .code == 4);
  const std::string small_vocab = s.write("small_vocab.txt", "wa\nwb\n");
  CHECK(run({"generate", "--config", cfg, "--vocab", small_vocab, "--checkpoint", s.path("ml.ckpt"), "--input",
             articles})
            .code == 4);
  CHECK(run({"generate", "--config", cfg, "--checkpoint", s.path("none.ckpt"), "--input", articles}).code == 3);
}

TEST_CASE("eval reports") {
  Scratch s("eval");
  const std::string refs = s.write("refs.txt", "citigroup embarks on plan to shed weak assets\nbenson penalized\n");
  const Result same = run({"eval", "--hyps", refs, "--refs", refs});
  REQUIRE(same.code == 0);
  CHECK(same.out.find("rouge1_f=1\n") != std::string::npos);

  const std::string h1 = s.write("h1.txt", "sports column : citigroup to citigroup at citigroup\n");
  const std::string r1 = s.write("r1.txt", "citigroup embarks on plan to shed weak assets\n");
  const Result t1 = run({"eval", "--hyps", h1, "--refs", r1});
  REQUIRE(t1.code == 0);
  CHECK(t1.out == "rouge1_f=0.25\nrouge2_f=0\nrougeL_f=0.25\nrepetition_rate=0.25\n");

  std::vector<std::string> keys;
  std::istringstream lines(t1.out);
  std::string line;
  while (std::getline(lines, line)) keys.push_back(line.substr(0, line.find('=')));
  CHECK(keys == std::vector<std::string>{"rouge1_f", "rouge2_f", "rougeL_f", "repetition_rate"});

  const Result table = run({"eval", "--hyps", h1, "--refs", r1, "--table"});
  CHECK(table.code == 0);
  CHECK(table.out.find("ROUGE-L") != std::string::npos);

  CHECK(run({"eval", "--hyps", h1, "--refs", refs}).code == 5);
  CHECK(run({"eval", "--hyps", s.path("none.txt"), "--refs", refs}).code == 3);
}

TEST_CASE("eval and score with a discriminator") {
  Scratch s("disc");
  const std::string cfg = s.write("run.cfg", tiny_config(s));
  REQUIRE(run({"preprocess", "--input", s.write("raw.tsv", toy_raw_corpus(8, 4)), "--out-dir", s.path("prep")})
              .code == 0);
  REQUIRE(run({"train", "ml", "--config", cfg}).code == 0);
  REQUIRE(run({"train", "disc", "--config", cfg}).code == 0);
  const std::string hyps = s.write("h.txt", "wa wb\nwc\n");
  const std::string refs = s.write("r.txt", "wa wc\nwc wd\n");
  const std::string arts = s.write("a.txt", "wa wb wc\nwc wd we\n");
  const Result r = run({"eval", "--config", cfg, "--hyps", hyps, "--refs", refs, "--articles", arts,
                        "--disc-checkpoint", s.path("disc.ckpt")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("d_mean=") != std::string::npos);
  CHECK(r.out.find("adv_reward_mean=") != std::string::npos);
  CHECK(run({"eval", "--config", cfg, "--hyps", hyps, "--refs", refs, "--disc-checkpoint", s.path("disc.ckpt")})
            .code == 3);
  const std::string short_arts = s.write("a1.txt", "wa wb wc\n");
  CHECK(run({"eval", "--config", cfg, "--hyps", hyps, "--refs", refs, "--articles", short_arts,
             "--disc-checkpoint", s.path("disc.ckpt")})
            .code == 5);

  const Result sc = run({"score", "--config", cfg, "--hyp", "wa wb", "--ref", "wa wc", "--article", "wa wb wc",
                         "--disc-checkpoint", s.path("disc.ckpt")});
  REQUIRE(sc.code == 0);
  CHECK(sc.out.find("rouge_rp=0.5\n") != std::string::npos);
  CHECK(sc.out.find("beta=2000\n") != std::string::npos);
}

TEST_CASE("score breakdowns") {
  const Result r = run({"score", "--hyp", "sports column : citigroup to citigroup at citigroup", "--ref",
                        "citigroup embarks on plan to shed weak assets"});
  REQUIRE(r.code == 0);
  CHECK(r.out == "rougeL_f=0.25\nrepetition_rate=0.25\nrouge_rp=0.1875\nd_score=0\nbeta=2000\nreward=0.1875\n");
  const Result plain = run({"score", "--reward", "rouge", "--hyp", "a b c", "--ref", "a b c"});
  CHECK(plain.out.find("reward=1\n") != std::string::npos);
  CHECK(run({"score", "--reward", "rouge_rp_adv", "--hyp", "a", "--ref", "a"}).code == 3);
}

TEST_CASE("the installed binary maps errors to exit codes") {
  Scratch s("binary");
  const std::string bin = HLGEN_CLI_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(raw);
  };
  CHECK(status(bin + " --help") == 0);
  CHECK(status(bin + " preprocess --input " + s.write("e.tsv", "") + " --out-dir " + s.path("o")) == 0);
  CHECK(status(bin + " preprocess --input " + s.write("bad.tsv", "x\n") + " --out-dir " + s.path("o")) == 2);
  CHECK(status(bin + " eval --hyps " + s.write("h", "a\n") + " --refs " + s.write("r", "a\nb\n")) == 5);
}
