#include "doctest.h"
#include "rim/corpus.hpp"
#include "rim/vocab.hpp"

using namespace rim;

namespace {

Vocabulary test_vocab() {
    CorpusSpec spec;
    return Vocabulary::build(generate_corpus(spec, 99, 200));
}

}  // namespace

TEST_CASE("piece scanner: digits split, words whole, markers atomic") {
    // oracle: hand-tokenized
    auto pieces = Vocabulary::split_pieces("<<18.5 - 8.5 = 10>>");
    std::vector<std::string> want = {"<<", "1", "8", ".",  "5", " -", " 8",
                                     ".",  "5", " =", " 1", "0", ">>"};
    CHECK(pieces == want);

    pieces = Vocabulary::split_pieces("The final answer is \\boxed{8.92}");
    want = {"The", " final", " answer", " is", " \\boxed{", "8", ".", "9", "2", "}"};
    CHECK(pieces == want);

    pieces = Vocabulary::split_pieces("Start with 47.");
    want = {"Start", " with", " 4", "7", "."};
    CHECK(pieces == want);
}

TEST_CASE("encode/decode round trips exactly") {
    Vocabulary v = test_vocab();
    CorpusSpec spec;
    for (uint64_t i = 0; i < 50; ++i) {
        Sample s = generate_sample(spec, 99, i);
        CHECK(v.decode(v.encode(s.question)) == s.question);
        for (const auto& step : s.steps) {
            CHECK(v.decode(v.encode(step)) == step);
            CHECK(v.decode(v.encode(" " + step)) == " " + step);
        }
        CHECK(v.decode(v.encode(s.answer)) == s.answer);
    }
}

TEST_CASE("special ids are disjoint from base pieces and stable") {
    Vocabulary v = test_vocab();
    CHECK(v.size() == v.base_size() + 6);
    for (int t = 0; t < static_cast<int>(SpecialToken::count); ++t) {
        TokenId id = v.special(static_cast<SpecialToken>(t));
        CHECK(v.is_special(id));
        CHECK(id >= v.base_size());
        CHECK(id < v.size());
    }
    CHECK(v.piece(v.special(SpecialToken::latent)) == "<m>");
    CHECK(v.piece(v.special(SpecialToken::block_open)) == "<b>");
    CHECK(v.piece(v.special(SpecialToken::readout)) == "<r>");
    CHECK(!v.is_special(v.piece_id("The")));
}

TEST_CASE("vocabulary build is deterministic and serializes") {
    Vocabulary a = test_vocab();
    Vocabulary b = test_vocab();
    CHECK(a.to_json() == b.to_json());
    Vocabulary c = Vocabulary::from_json(a.to_json());
    CHECK(c.size() == a.size());
    CHECK(c.encode("Start with 47.") == a.encode("Start with 47."));
}

TEST_CASE("answer segment: forced prefix + digits + closing brace + eos") {
    Vocabulary v = test_vocab();
    AnswerSegment seg = answer_segment(v, "8.92");
    // prefix "The final answer is \boxed{" is 5 pieces (oracle above)
    CHECK(seg.prefix_len == 5);
    CHECK(seg.tokens.size() == 5 + 5 + 1);  // prefix + "8.92}" (5 pieces) + eos
    CHECK(seg.tokens.back() == v.special(SpecialToken::eos));
    std::vector<TokenId> prefix = answer_prefix(v);
    CHECK(static_cast<int>(prefix.size()) == seg.prefix_len);
    for (size_t i = 0; i < prefix.size(); ++i) CHECK(prefix[i] == seg.tokens[i]);
}

TEST_CASE("extract_boxed pulls the answer text") {
    Vocabulary v = test_vocab();
    std::string out;
    AnswerSegment seg = answer_segment(v, "8.92");
    CHECK(extract_boxed(v, seg.tokens, &out));
    CHECK(out == "8.92");

    // unclosed box
    std::vector<TokenId> cut(seg.tokens.begin(), seg.tokens.end() - 2);
    CHECK(!extract_boxed(v, cut, &out));

    // no box at all
    CHECK(!extract_boxed(v, v.encode("Start with 47."), &out));

    // box embedded in longer text
    std::vector<TokenId> ids = v.encode("The final answer is \\boxed{10} equal");
    CHECK(extract_boxed(v, ids, &out));
    CHECK(out == "10");
}

TEST_CASE("unknown pieces are rejected") {
    Vocabulary v = test_vocab();
    CHECK_THROWS(v.encode("Zebra"));  // word never in templates
}
