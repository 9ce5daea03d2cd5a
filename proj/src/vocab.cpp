#include "rim/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "json.hpp"
#include "rim/common.hpp"
#include "rim/corpus.hpp"

namespace rim {

namespace {

const char* kBoxedMarker = "\\boxed{";
const char* kAnswerPrefixText = "The final answer is \\boxed{";

bool is_word_char(char c) { return std::isalpha(static_cast<unsigned char>(c)); }
bool is_digit_char(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

}  // namespace

const char* special_token_name(SpecialToken t) {
    switch (t) {
        case SpecialToken::block_open: return "<b>";
        case SpecialToken::latent: return "<m>";
        case SpecialToken::block_close: return "</b>";
        case SpecialToken::readout: return "<r>";
        case SpecialToken::thought: return "<ct>";
        case SpecialToken::eos: return "<eos>";
        default: fail("special_token_name: bad token");
    }
}

std::vector<std::string> Vocabulary::split_pieces(const std::string& text) {
    std::vector<std::string> pieces;
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        std::string space;
        if (text[i] == ' ') {
            // fold a single space into the next piece; a space with no
            // followable text becomes a piece of its own
            if (i + 1 < n && text[i + 1] != ' ') {
                space = " ";
                ++i;
            } else {
                pieces.emplace_back(" ");
                ++i;
                continue;
            }
        }
        std::string body;
        if (text.compare(i, 2, "<<") == 0) {
            body = "<<";
        } else if (text.compare(i, 2, ">>") == 0) {
            body = ">>";
        } else if (text.compare(i, 7, kBoxedMarker) == 0) {
            body = kBoxedMarker;
        } else if (is_word_char(text[i])) {
            size_t j = i;
            while (j < n && is_word_char(text[j])) ++j;
            body = text.substr(i, j - i);
        } else if (is_digit_char(text[i])) {
            body = text.substr(i, 1);  // digits one at a time
        } else {
            body = text.substr(i, 1);
        }
        i += body.size();
        pieces.push_back(space + body);
    }
    return pieces;
}

Vocabulary Vocabulary::build(const std::vector<Sample>& samples) {
    std::set<std::string> seen;
    auto add_text = [&seen](const std::string& text) {
        for (auto& p : split_pieces(text)) seen.insert(p);
    };
    for (const Sample& s : samples) {
        add_text(s.question);
        for (const std::string& step : s.steps) add_text(step);
        add_text(std::string(kAnswerPrefixText) + s.answer + "}");
    }
    // Canonical arithmetic surface, with and without leading space, so a
    // corpus that happens to miss a digit or operator still encodes cleanly.
    for (char d = '0'; d <= '9'; ++d) {
        seen.insert(std::string(1, d));
        seen.insert(std::string(" ") + d);
    }
    for (const char* t : {".", "-", "+", "*", "/", "=", "}", "<<", ">>", kBoxedMarker}) {
        seen.insert(t);
        seen.insert(std::string(" ") + t);
    }
    seen.insert(" ");

    Vocabulary v;
    v.pieces_.assign(seen.begin(), seen.end());  // std::set iterates sorted
    for (size_t i = 0; i < v.pieces_.size(); ++i) {
        v.index_[v.pieces_[i]] = static_cast<TokenId>(i);
    }
    v.n_base_ = static_cast<int>(v.pieces_.size());
    return v;
}

std::vector<TokenId> Vocabulary::encode(const std::string& text) const {
    std::vector<TokenId> out;
    for (auto& p : split_pieces(text)) out.push_back(piece_id(p));
    return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) out += piece(id);
    return out;
}

TokenId Vocabulary::piece_id(const std::string& piece) const {
    auto it = index_.find(piece);
    if (it == index_.end()) fail("vocabulary: unknown piece '" + piece + "'");
    return it->second;
}

TokenId Vocabulary::special(SpecialToken t) const {
    return static_cast<TokenId>(n_base_ + static_cast<int>(t));
}

const std::string& Vocabulary::piece(TokenId id) const {
    check(id >= 0 && id < size(), "vocabulary: id out of range " + std::to_string(id));
    if (id < n_base_) return pieces_[static_cast<size_t>(id)];
    static const std::string specials[] = {"<b>", "<m>", "</b>", "<r>", "<ct>", "<eos>"};
    return specials[id - n_base_];
}

std::string Vocabulary::to_json() const {
    nlohmann::json j = {{"pieces", pieces_}};
    return j.dump();
}

Vocabulary Vocabulary::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Vocabulary v;
    v.pieces_ = j.at("pieces").get<std::vector<std::string>>();
    check(std::is_sorted(v.pieces_.begin(), v.pieces_.end()), "vocabulary: pieces not sorted");
    for (size_t i = 0; i < v.pieces_.size(); ++i) {
        v.index_[v.pieces_[i]] = static_cast<TokenId>(i);
    }
    v.n_base_ = static_cast<int>(v.pieces_.size());
    return v;
}

AnswerSegment answer_segment(const Vocabulary& vocab, const std::string& answer) {
    AnswerSegment seg;
    seg.prefix_len = static_cast<int>(vocab.encode(kAnswerPrefixText).size());
    seg.tokens = vocab.encode(std::string(kAnswerPrefixText) + answer + "}");
    seg.tokens.push_back(vocab.special(SpecialToken::eos));
    return seg;
}

std::vector<TokenId> answer_prefix(const Vocabulary& vocab) {
    return vocab.encode(kAnswerPrefixText);
}

bool extract_boxed(const Vocabulary& vocab, const std::vector<TokenId>& ids, std::string* out) {
    size_t open = ids.size();
    for (size_t i = 0; i < ids.size(); ++i) {
        const std::string& p = vocab.piece(ids[i]);
        if (p.size() >= 7 && p.compare(p.size() - 7, 7, kBoxedMarker) == 0) open = i;
    }
    if (open == ids.size()) return false;
    std::string text;
    for (size_t i = open + 1; i < ids.size(); ++i) {
        if (vocab.is_special(ids[i])) return false;
        const std::string& p = vocab.piece(ids[i]);
        if (p == "}" || p == " }") {
            *out = text;
            return true;
        }
        text += p;
    }
    return false;
}

}  // namespace rim
