#include "rim/corpus.hpp"

#include <array>
#include <cstdlib>

#include "json.hpp"
#include "rim/common.hpp"

namespace rim {

namespace {

using json = nlohmann::json;

// Round q = n/d to the nearest integer, half away from zero. d > 0.
int64_t div_round_half_away(__int128 n, __int128 d) {
    bool neg = n < 0;
    __int128 an = neg ? -n : n;
    __int128 q = (2 * an + d) / (2 * d);
    return static_cast<int64_t>(neg ? -q : q);
}

}  // namespace

// -------------------------------------------------------- exact decimal ----

Decimal decimal_add(Decimal a, Decimal b) { return Decimal{a.units + b.units}; }
Decimal decimal_sub(Decimal a, Decimal b) { return Decimal{a.units - b.units}; }

Decimal decimal_mul(Decimal a, Decimal b) {
    __int128 prod = static_cast<__int128>(a.units) * b.units;
    return Decimal{div_round_half_away(prod, Decimal::scale)};
}

Decimal decimal_div(Decimal a, Decimal b) {
    check(b.units != 0, "decimal_div: division by zero");
    __int128 n = static_cast<__int128>(a.units) * Decimal::scale;
    int64_t d = b.units;
    if (d < 0) { n = -n; d = -d; }
    return Decimal{div_round_half_away(n, d)};
}

std::string decimal_render(Decimal v) {
    int64_t u = v.units;
    std::string out;
    if (u < 0) { out.push_back('-'); u = -u; }
    out += std::to_string(u / Decimal::scale);
    int64_t frac = u % Decimal::scale;
    if (frac != 0) {
        out.push_back('.');
        out.push_back(static_cast<char>('0' + frac / 10));
        if (frac % 10 != 0) out.push_back(static_cast<char>('0' + frac % 10));
    }
    return out;
}

Decimal decimal_parse(const std::string& text) {
    check(!text.empty(), "decimal_parse: empty string");
    size_t i = 0;
    bool neg = false;
    if (text[i] == '-') { neg = true; ++i; }
    check(i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])),
          "decimal_parse: bad number '" + text + "'");
    int64_t whole = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        whole = whole * 10 + (text[i] - '0');
        check(whole <= INT64_MAX / Decimal::scale, "decimal_parse: overflow '" + text + "'");
        ++i;
    }
    int64_t frac = 0;
    if (i < text.size() && text[i] == '.') {
        ++i;
        int digits = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            check(digits < 2, "decimal_parse: more than 2 decimal places '" + text + "'");
            frac = frac * 10 + (text[i] - '0');
            ++digits;
            ++i;
        }
        check(digits > 0, "decimal_parse: trailing point '" + text + "'");
        if (digits == 1) frac *= 10;
    }
    check(i == text.size(), "decimal_parse: trailing characters '" + text + "'");
    int64_t units = whole * Decimal::scale + frac;
    return Decimal{neg ? -units : units};
}

// ------------------------------------------------------------- samples ----

char op_char(Op op) {
    switch (op) {
        case Op::add: return '+';
        case Op::sub: return '-';
        case Op::mul: return '*';
        case Op::divide: return '/';
    }
    fail("op_char: bad op");
}

Op op_from_char(char c) {
    switch (c) {
        case '+': return Op::add;
        case '-': return Op::sub;
        case '*': return Op::mul;
        case '/': return Op::divide;
    }
    fail(std::string("op_from_char: bad op '") + c + "'");
}

std::string render_step(const ParsedStep& s) {
    return "<<" + decimal_render(s.a) + " " + op_char(s.op) + " " +
           decimal_render(s.b) + " = " + decimal_render(s.c) + ">>";
}

ParsedStep parse_step(const std::string& step) {
    check(starts_with(step, "<<") && step.size() > 4 &&
              step.compare(step.size() - 2, 2, ">>") == 0,
          "parse_step: missing << >> in '" + step + "'");
    std::string body = step.substr(2, step.size() - 4);
    // layout: "a OP b = c" with single spaces
    size_t sp1 = body.find(' ');
    check(sp1 != std::string::npos && sp1 + 2 < body.size() && body[sp1 + 2] == ' ',
          "parse_step: bad operator field in '" + step + "'");
    size_t sp2 = sp1 + 2;
    size_t eq = body.find(" = ", sp2 + 1);
    check(eq != std::string::npos, "parse_step: missing '=' in '" + step + "'");
    ParsedStep out;
    out.a = decimal_parse(body.substr(0, sp1));
    out.op = op_from_char(body[sp1 + 1]);
    out.b = decimal_parse(body.substr(sp2 + 1, eq - sp2 - 1));
    out.c = decimal_parse(body.substr(eq + 3));
    return out;
}

namespace {

Decimal apply_op(Decimal a, Op op, Decimal b) {
    switch (op) {
        case Op::add: return decimal_add(a, b);
        case Op::sub: return decimal_sub(a, b);
        case Op::mul: return decimal_mul(a, b);
        case Op::divide: return decimal_div(a, b);
    }
    fail("apply_op: bad op");
}

}  // namespace

void verify_sample(const Sample& sample) {
    check(!sample.steps.empty(), "verify_sample: no steps");
    Decimal carry{};
    for (size_t i = 0; i < sample.steps.size(); ++i) {
        ParsedStep s = parse_step(sample.steps[i]);
        if (i > 0) {
            check(s.a == carry, "verify_sample: step " + std::to_string(i) +
                                    " does not chain from previous result");
        }
        Decimal c = apply_op(s.a, s.op, s.b);
        check(c == s.c, "verify_sample: step " + std::to_string(i) + " result mismatch: " +
                            render_step(s) + " should end in " + decimal_render(c));
        carry = s.c;
    }
    check(decimal_parse(sample.answer) == carry,
          "verify_sample: answer '" + sample.answer + "' != final step result '" +
              decimal_render(carry) + "'");
}

// ---------------------------------------------------------- generation ----

namespace {

const std::array<const char*, 3> kStartTemplates = {
    "Start with %s.", "Begin with %s.", "Take the number %s."};
const std::array<const char*, 3> kAddTemplates = {
    "Add %s.", "Increase it by %s.", "Add %s to it."};
const std::array<const char*, 3> kSubTemplates = {
    "Subtract %s.", "Decrease it by %s.", "Take away %s."};
const std::array<const char*, 3> kMulTemplates = {
    "Multiply by %s.", "Multiply it by %s.", "Scale it by %s."};
const std::array<const char*, 3> kDivTemplates = {
    "Divide by %s.", "Divide it by %s.", "Share it over %s equal parts."};
const std::array<const char*, 3> kAskTemplates = {
    "What is the result?", "What do you get?", "What is the final value?"};

std::string fill_template(const char* tpl, const std::string& value) {
    std::string s(tpl);
    size_t at = s.find("%s");
    check(at != std::string::npos, "fill_template: no placeholder");
    return s.replace(at, 2, value);
}

template <size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& options) {
    return options[static_cast<size_t>(rng.uniform_int(0, N - 1))];
}

}  // namespace

Sample generate_sample(const CorpusSpec& spec, uint64_t seed, uint64_t index) {
    check(!spec.step_distribution.empty(), "generate_sample: empty step distribution");
    check(!spec.operators.empty(), "generate_sample: no operators enabled");
    check(spec.operand_min <= spec.operand_max, "generate_sample: bad operand range");

    Rng rng(derive_seed(seed, index));

    std::vector<double> weights;
    weights.reserve(spec.step_distribution.size());
    for (auto& [count, prob] : spec.step_distribution) {
        check(count >= 1, "generate_sample: step count must be >= 1");
        weights.push_back(prob);
    }
    int n_steps = spec.step_distribution[rng.categorical(weights)].first;

    Decimal value = Decimal::from_int(rng.uniform_int(spec.operand_min, spec.operand_max));

    Sample out;
    out.question = fill_template(pick(rng, kStartTemplates), decimal_render(value));
    for (int i = 0; i < n_steps; ++i) {
        ParsedStep step;
        step.a = value;
        int tries = 0;
        for (;;) {
            check(tries++ < spec.max_retries,
                  "generate_sample: exceeded retry bound at step " + std::to_string(i));
            size_t oi = static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(spec.operators.size()) - 1));
            step.op = spec.operators[oi];
            step.b = Decimal::from_int(rng.uniform_int(spec.operand_min, spec.operand_max));
            if (step.op == Op::divide && step.b.units == 0) continue;
            Decimal c = apply_op(step.a, step.op, step.b);
            if (std::llabs(c.units) > spec.max_abs_value * Decimal::scale) continue;
            step.c = c;
            break;
        }
        const char* tpl = nullptr;
        switch (step.op) {
            case Op::add: tpl = pick(rng, kAddTemplates); break;
            case Op::sub: tpl = pick(rng, kSubTemplates); break;
            case Op::mul: tpl = pick(rng, kMulTemplates); break;
            case Op::divide: tpl = pick(rng, kDivTemplates); break;
        }
        out.question += " " + fill_template(tpl, decimal_render(step.b));
        out.steps.push_back(render_step(step));
        value = step.c;
    }
    out.question += std::string(" ") + pick(rng, kAskTemplates);
    out.answer = decimal_render(value);
    return out;
}

std::vector<Sample> generate_corpus(const CorpusSpec& spec, uint64_t seed, size_t count) {
    std::vector<Sample> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) out.push_back(generate_sample(spec, seed, i));
    return out;
}

// ---------------------------------------------------------------- spec ----

std::string corpus_spec_to_json(const CorpusSpec& spec) {
    json dist = json::array();
    for (auto& [count, prob] : spec.step_distribution) dist.push_back({count, prob});
    std::string ops;
    for (Op op : spec.operators) ops.push_back(op_char(op));
    json j = {{"step_distribution", dist},
              {"operand_min", spec.operand_min},
              {"operand_max", spec.operand_max},
              {"operators", ops},
              {"max_abs_value", spec.max_abs_value},
              {"max_retries", spec.max_retries}};
    return j.dump();
}

CorpusSpec corpus_spec_from_json(const std::string& text) {
    json j = json::parse(text);
    CorpusSpec spec;
    spec.step_distribution.clear();
    for (auto& pair : j.at("step_distribution")) {
        spec.step_distribution.emplace_back(pair.at(0).get<int>(), pair.at(1).get<double>());
    }
    spec.operand_min = j.at("operand_min").get<int64_t>();
    spec.operand_max = j.at("operand_max").get<int64_t>();
    spec.operators.clear();
    for (char c : j.at("operators").get<std::string>()) spec.operators.push_back(op_from_char(c));
    spec.max_abs_value = j.at("max_abs_value").get<int64_t>();
    spec.max_retries = j.at("max_retries").get<int>();
    return spec;
}

uint64_t corpus_spec_hash(const CorpusSpec& spec) { return fnv1a(corpus_spec_to_json(spec)); }

// ------------------------------------------------------------------ io ----

void write_jsonl(const std::string& path, const std::vector<Sample>& samples) {
    std::string out;
    for (const Sample& s : samples) {
        json j = {{"question", s.question}, {"steps", s.steps}, {"answer", s.answer}};
        out += j.dump();
        out.push_back('\n');
    }
    write_text_file(path, out);
}

std::vector<Sample> read_jsonl(const std::string& path) {
    std::vector<Sample> out;
    for (const std::string& line : split_lines(read_text_file(path))) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Sample s;
        s.question = j.at("question").get<std::string>();
        s.steps = j.at("steps").get<std::vector<std::string>>();
        s.answer = j.at("answer").get<std::string>();
        out.push_back(std::move(s));
    }
    return out;
}

void write_corpus(const std::string& path, const std::vector<Sample>& samples,
                  const CorpusSpec& spec, uint64_t seed) {
    write_jsonl(path, samples);
    json meta = {{"spec", json::parse(corpus_spec_to_json(spec))},
                 {"seed", seed},
                 {"count", samples.size()},
                 {"spec_hash", hex64(corpus_spec_hash(spec))}};
    write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

}  // namespace rim
