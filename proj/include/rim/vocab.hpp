#pragma once

// Word-level tokenizer with exact round-trip.
//
// Text splits into pieces that carry their leading space ("Start", " with",
// " 4", "7", "."): words stay whole, numbers split into single digits,
// everything else is a single character, and the corpus markers "<<", ">>"
// and the answer marker "\boxed{" are atomic.  decode(encode(s)) == s.
// Special tokens (<b>, <m>, </b>, <r>, <ct>, <eos>) live in a disjoint id
// range above the text pieces.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace rim {

struct Sample;

using TokenId = int32_t;

enum class SpecialToken : int {
    block_open,   // <b>
    latent,       // <m>
    block_close,  // </b>
    readout,      // <r>  (starts a teacher-forced readout branch)
    thought,      // <ct> (placeholder at injected-embedding positions)
    eos,
    count
};

const char* special_token_name(SpecialToken t);

class Vocabulary {
public:
    Vocabulary() = default;

    /// Scan text into pieces (each with optional leading space).  Static:
    /// does not need a built vocabulary.
    static std::vector<std::string> split_pieces(const std::string& text);

    /// Collect every piece of every sample's question/steps/answer plus the
    /// answer-segment scaffolding, sort them, and assign stable ids.
    static Vocabulary build(const std::vector<Sample>& samples);

    std::vector<TokenId> encode(const std::string& text) const;
    std::string decode(const std::vector<TokenId>& ids) const;  // specials render as "<b>" etc.

    TokenId piece_id(const std::string& piece) const;  // throws on unknown
    TokenId special(SpecialToken t) const;
    bool is_special(TokenId id) const { return id >= n_base_; }

    int size() const { return n_base_ + static_cast<int>(SpecialToken::count); }
    int base_size() const { return n_base_; }
    const std::string& piece(TokenId id) const;

    std::string to_json() const;
    static Vocabulary from_json(const std::string& text);

private:
    std::vector<std::string> pieces_;  // base pieces, sorted
    std::unordered_map<std::string, TokenId> index_;
    int n_base_ = 0;
};

/// Tokens of the forced answer segment: "The final answer is \boxed{" +
/// answer digits + "}".  `prefix_len` of the result is the forced prefix.
struct AnswerSegment {
    std::vector<TokenId> tokens;
    int prefix_len = 0;
};

AnswerSegment answer_segment(const Vocabulary& vocab, const std::string& answer);

/// The forced prefix alone (used to seed decoding).
std::vector<TokenId> answer_prefix(const Vocabulary& vocab);

/// Extract the answer text from decoded tokens: everything between the
/// "\boxed{" marker and the matching "}".  Returns false if absent/unclosed.
bool extract_boxed(const Vocabulary& vocab, const std::vector<TokenId>& ids, std::string* out);

}  // namespace rim
