#pragma once

// Synthetic multi-step arithmetic corpus.
//
// Each sample is a templated word problem ("Start with 47. Add 19. ... What
// is the result?"), an extracted trace of chained equations in the
// "<<a op b = c>>" surface form, and the final answer string.  Values are
// exact scaled decimals (2 fractional digits); each step consumes the
// *rendered* result of the previous step, so re-evaluating a trace
// reproduces it token for token.  Sample i is a pure function of
// (spec, seed, i).

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rim {

// -------------------------------------------------------- exact decimal ----

// Fixed-point value scaled by 100.  Arithmetic is exact on the scaled
// integers; multiplication and division round half away from zero to the
// 2-decimal grid (the same grid the renderer prints), via 128-bit
// intermediates so desk-scale magnitudes cannot overflow.
struct Decimal {
    int64_t units = 0;  // value * 100

    static constexpr int64_t scale = 100;

    static Decimal from_int(int64_t v) { return Decimal{v * scale}; }
    bool operator==(const Decimal&) const = default;
};

Decimal decimal_parse(const std::string& text);
std::string decimal_render(Decimal v);  // "10", "-3.5", "1.08" (trailing zeros stripped)

Decimal decimal_add(Decimal a, Decimal b);
Decimal decimal_sub(Decimal a, Decimal b);
Decimal decimal_mul(Decimal a, Decimal b);  // rounds to grid
Decimal decimal_div(Decimal a, Decimal b);  // rounds to grid; b must be nonzero

// ------------------------------------------------------------- samples ----

enum class Op : uint8_t { add, sub, mul, divide };

char op_char(Op op);
Op op_from_char(char c);

struct Sample {
    std::string question;
    std::vector<std::string> steps;  // "<<a op b = c>>"
    std::string answer;              // rendered final value
};

struct ParsedStep {
    Decimal a, b, c;
    Op op = Op::add;
};

ParsedStep parse_step(const std::string& step);
std::string render_step(const ParsedStep& s);

/// Re-evaluate the trace; throws if any step's result or the final answer
/// does not reproduce exactly (the corpus invariant).
void verify_sample(const Sample& sample);

// ---------------------------------------------------------- generation ----

struct CorpusSpec {
    // (step count, probability) pairs; probabilities need not sum to 1.
    std::vector<std::pair<int, double>> step_distribution = {
        {1, 0.30}, {2, 0.30}, {3, 0.25}, {4, 0.15}};
    int64_t operand_min = 2;
    int64_t operand_max = 99;
    std::vector<Op> operators = {Op::add, Op::sub, Op::mul, Op::divide};
    // Steps whose result magnitude would exceed this are resampled, which
    // also keeps the scaled-integer arithmetic far from overflow.
    int64_t max_abs_value = 1000000;
    int max_retries = 64;
};

std::string corpus_spec_to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(const std::string& text);
uint64_t corpus_spec_hash(const CorpusSpec& spec);

Sample generate_sample(const CorpusSpec& spec, uint64_t seed, uint64_t index);
std::vector<Sample> generate_corpus(const CorpusSpec& spec, uint64_t seed, size_t count);

// ------------------------------------------------------------------ io ----

void write_jsonl(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> read_jsonl(const std::string& path);

/// write_jsonl plus a `<path>.meta.json` sidecar recording spec, seed, count
/// and the spec hash.
void write_corpus(const std::string& path, const std::vector<Sample>& samples,
                  const CorpusSpec& spec, uint64_t seed);

}  // namespace rim
