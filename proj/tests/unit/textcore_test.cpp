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

#include <sstream>
#include <string>
#include <vector>

#include "hlgen/textcore.hpp"
#include "support/toy.hpp"

using namespace hlgen;

TEST_CASE("tokenize lowercases and splits on whitespace") {
  CHECK(tokenize("Benson penalized") == TokenSeq{"benson", "penalized"});
  CHECK(tokenize("the NAPA California # on Friday") ==
        TokenSeq{"the", "napa", "california", "#", "on", "friday"});
  CHECK(tokenize("") == TokenSeq{});
  CHECK(tokenize("  \t ") == TokenSeq{});
}

TEST_CASE("tokenize masks digits and detaches punctuation") {
  CHECK(tokenize("miss 15 minutes.") == TokenSeq{"miss", "##", "minutes", "."});
  CHECK(tokenize("(A,b):c;d!e?") ==
        TokenSeq{"(", "a", ",", "b", ")", ":", "c", ";", "d", "!", "e", "?"});
  CHECK(tokenize("x-ray's 3.5") == TokenSeq{"x-ray's", "#", ".", "#"});
}

TEST_CASE("tokenize output has no empty or whitespace tokens and is idempotent") {
  hlgen::Rng rng(42);
  const std::string alphabet = "aB3 .,:;!?()\t-x9Z";
  for (int trial = 0; trial < 500; ++trial) {
    std::string raw;
    const std::size_t len = rng() % 30;
    for (std::size_t i = 0; i < len; ++i) raw += alphabet[rng() % alphabet.size()];
    const TokenSeq toks = tokenize(raw);
    for (const auto& t : toks) {
      CHECK_FALSE(t.empty());
      CHECK(t.find_first_of(" \t\r\n") == std::string::npos);
    }
    CHECK(tokenize(join(toks)) == toks);
  }
}

TEST_CASE("build_vocab ranks by frequency with lexicographic ties") {
  std::vector<ExamplePair> corpus{{tokenize("a a b"), tokenize("b")}};
  const Vocabulary v = build_vocab(corpus, 6);
  CHECK(v.size() == 6);
  CHECK(v.id_of("a") == 4);
  CHECK(v.id_of("b") == 5);

  std::vector<ExamplePair> single{{{"x"}, {"x"}}};
  CHECK(build_vocab(single, 5).corpus_tokens() == std::vector<std::string>{"x"});

  std::vector<ExamplePair> tie{{{"a", "b"}, {}}};
  CHECK(build_vocab(tie, 10).corpus_tokens() == std::vector<std::string>{"a", "b"});

  std::vector<ExamplePair> truncated{{{"c", "b", "b", "a", "a", "a"}, {"c"}}};
  CHECK(build_vocab(truncated, 6).corpus_tokens() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("build_vocab errors") {
  std::vector<ExamplePair> empty;
  try {
    (void)build_vocab(empty, 10);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "empty corpus");
  }
  std::vector<ExamplePair> one{{{"x"}, {"x"}}};
  CHECK_THROWS_AS(build_vocab(one, 4), Error);
}

TEST_CASE("reserved ids are fixed and never produced by counting") {
  std::vector<ExamplePair> corpus{{{"<unk>", "<s>", "y"}, {"</s>", "<pad>"}}};
  const Vocabulary v = build_vocab(corpus, 100);
  CHECK(v.corpus_tokens() == std::vector<std::string>{"y"});
  CHECK(v.token_of(Vocabulary::kPad) == "<pad>");
  CHECK(v.token_of(Vocabulary::kUnk) == "<unk>");
  CHECK(v.token_of(Vocabulary::kBos) == "<s>");
  CHECK(v.token_of(Vocabulary::kEos) == "</s>");
  CHECK(v.id_of("never-seen") == Vocabulary::kUnk);
}

TEST_CASE("vocabulary file round trip") {
  const Vocabulary v = Vocabulary::from_tokens({"the", "a", "#"});
  std::stringstream buf;
  write_vocab(buf, v);
  CHECK(buf.str() == "the\na\n#\n");
  CHECK(read_vocab(buf) == v);

  std::stringstream bad("ok\n\nfine\n");
  try {
    (void)read_vocab(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
  }
  std::stringstream dup("a\na\n");
  CHECK_THROWS_AS(read_vocab(dup), FormatError);
}

TEST_CASE("encode_with_pointer assigns extended ids to article OOVs") {
  const Vocabulary v = Vocabulary::from_tokens({"known"});
  {
    const EncodedPair e = encode_with_pointer({{"foo"}, {"known"}}, v);
    CHECK(e.src_ids == std::vector<std::size_t>{Vocabulary::kUnk});
    CHECK(e.src_ext_ids == std::vector<std::size_t>{v.size()});
    CHECK(e.ext.article_oovs() == std::vector<std::string>{"foo"});
    CHECK(e.tgt_ext_ids == std::vector<std::size_t>{v.id_of("known")});
  }
  {
    const EncodedPair e = encode_with_pointer({{"foo", "bar", "foo"}, {"bar", "baz", "known"}}, v);
    const std::size_t V = v.size();
    CHECK(e.src_ext_ids == std::vector<std::size_t>{V, V + 1, V});
    CHECK(e.ext.article_oovs() == std::vector<std::string>{"foo", "bar"});
    CHECK(e.tgt_ids == std::vector<std::size_t>{Vocabulary::kUnk, Vocabulary::kUnk, v.id_of("known")});
    CHECK(e.tgt_ext_ids == std::vector<std::size_t>{V + 1, Vocabulary::kUnk, v.id_of("known")});
    CHECK(e.decoder_inputs().front() == Vocabulary::kBos);
    CHECK(e.decoder_targets().back() == Vocabulary::kEos);
    CHECK(e.decoder_inputs().size() == e.decoder_targets().size());
  }
}

TEST_CASE("encoding round trips and stays inside the extended vocabulary") {
  hlgen::Rng rng(7);
  const Vocabulary v = Vocabulary::from_tokens({"wa", "wb", "wc", "wd"});
  for (int trial = 0; trial < 300; ++trial) {
    ExamplePair p{testing::random_tokens(rng, 1 + rng() % 12, 10),
                  testing::random_tokens(rng, 1 + rng() % 5, 12)};
    const EncodedPair e = encode_with_pointer(p, v);
    CHECK(decode_ids(e.src_ext_ids, e.ext) == p.article);
    const std::size_t bound = v.size() + e.ext.article_oovs().size();
    for (auto id : e.src_ids) CHECK(id < v.size());
    for (auto id : e.src_ext_ids) CHECK(id < bound);
    for (auto id : e.tgt_ext_ids) CHECK(id < bound);
    for (std::size_t i = 0; i < e.src_ext_ids.size(); ++i) {
      CHECK(e.ext.input_id(e.src_ext_ids[i]) == e.src_ids[i]);
    }
  }
}

TEST_CASE("decode_ids stops at EOS and skips markers") {
  const Vocabulary v = Vocabulary::from_tokens({"a", "b"});
  const ExtendedVocab ext(v);
  const std::vector<std::size_t> ids{Vocabulary::kBos, 4, Vocabulary::kPad, 5, Vocabulary::kEos, 4};
  CHECK(decode_ids(ids, ext) == TokenSeq{"a", "b"});
}

TEST_CASE("corpus reading") {
  std::stringstream ok("a b\tc\nThe 2 Cats.\tcats\n");
  const auto corpus = read_corpus(ok);
  REQUIRE(corpus.size() == 2);
  CHECK(corpus[0].article == TokenSeq{"a", "b"});
  CHECK(corpus[0].headline == TokenSeq{"c"});
  CHECK(corpus[1].article == TokenSeq{"the", "#", "cats", "."});

  std::string long_article;
  for (int i = 0; i < 401; ++i) long_article += "t" + std::to_string(i) + " ";
  std::stringstream trunc(long_article + "\th\n");
  const auto t = read_corpus(trunc, 400);
  REQUIRE(t[0].article.size() == 400);
  CHECK(t[0].article.back() == "t###");
  CHECK(t[0].article.front() == "t#");

  std::stringstream no_tab("a\tb\nc\td\ne\tf\nno tab here\n");
  try {
    (void)read_corpus(no_tab);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  std::stringstream two_tabs("a\tb\tc\n");
  CHECK_THROWS_AS(read_corpus(two_tabs), FormatError);
  std::stringstream empty_headline("a b\t \n");
  CHECK_THROWS_AS(read_corpus(empty_headline), FormatError);
  std::stringstream nothing("");
  CHECK(read_corpus(nothing).empty());
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.tsv"), MissingPrerequisite);
}

TEST_CASE("written corpora read back unchanged") {
  const auto corpus = testing::copy_corpus(20, 15, 3);
  std::stringstream buf;
  write_corpus(buf, corpus);
  const auto back = read_corpus(buf);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back[i].article == corpus[i].article);
    CHECK(back[i].headline == corpus[i].headline);
  }
}
