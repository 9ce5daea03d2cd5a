#include <cstdio>
#include <map>

#include "doctest.h"
#include "rim/common.hpp"
#include "rim/corpus.hpp"

using namespace rim;

TEST_CASE("decimal rendering strips trailing zeros") {
    CHECK(decimal_render(Decimal::from_int(10)) == "10");
    CHECK(decimal_render(Decimal{1050}) == "10.5");
    CHECK(decimal_render(Decimal{1005}) == "10.05");
    CHECK(decimal_render(Decimal{-350}) == "-3.5");
    CHECK(decimal_render(Decimal{0}) == "0");
    CHECK(decimal_render(Decimal{1}) == "0.01");
}

TEST_CASE("decimal parse round trip") {
    for (const char* s : {"0", "7", "10.5", "1.08", "-3.5", "0.01", "-0.5", "123456"}) {
        CHECK(decimal_render(decimal_parse(s)) == s);
    }
    CHECK_THROWS(decimal_parse("1.234"));  // 3 decimal places
    CHECK_THROWS(decimal_parse("1."));
    CHECK_THROWS(decimal_parse("abc"));
    CHECK_THROWS(decimal_parse(""));
}

TEST_CASE("decimal arithmetic rounds half away from zero on the 2dp grid") {
    // oracle: 18.5 - 8.5 = 10 (integer result renders without decimals)
    CHECK(decimal_render(decimal_sub(decimal_parse("18.5"), decimal_parse("8.5"))) == "10");
    // oracle: 65 / 60 = 1.08333... -> 1.08 on the 2dp grid
    CHECK(decimal_render(decimal_div(Decimal::from_int(65), Decimal::from_int(60))) == "1.08");
    // oracle: 1.25 * 1.5 = 1.875 -> 1.88 (half rounds away from zero)
    CHECK(decimal_render(decimal_mul(decimal_parse("1.25"), decimal_parse("1.5"))) == "1.88");
    // oracle: -1.875 -> -1.88 (away from zero, not toward +inf)
    CHECK(decimal_render(decimal_mul(decimal_parse("-1.25"), decimal_parse("1.5"))) == "-1.88");
    // oracle: 0.05 / 10 = 0.005 -> 0.01
    CHECK(decimal_render(decimal_div(decimal_parse("0.05"), Decimal::from_int(10))) == "0.01");
    // oracle: 2 / 3 = 0.666... -> 0.67
    CHECK(decimal_render(decimal_div(Decimal::from_int(2), Decimal::from_int(3))) == "0.67");
    CHECK_THROWS(decimal_div(Decimal::from_int(1), Decimal{0}));
}

TEST_CASE("step strings parse and re-render exactly") {
    ParsedStep s = parse_step("<<18.5 - 8.5 = 10>>");
    CHECK(decimal_render(s.a) == "18.5");
    CHECK(op_char(s.op) == '-');
    CHECK(decimal_render(s.b) == "8.5");
    CHECK(decimal_render(s.c) == "10");
    CHECK(render_step(s) == "<<18.5 - 8.5 = 10>>");
    CHECK_THROWS(parse_step("<<18.5 - 8.5>>"));
    CHECK_THROWS(parse_step("18.5 - 8.5 = 10"));
}

TEST_CASE("generated samples re-evaluate exactly and chain rendered values") {
    CorpusSpec spec;
    for (uint64_t i = 0; i < 1000; ++i) {
        Sample s = generate_sample(spec, 7, i);
        CHECK_NOTHROW(verify_sample(s));
        CHECK(!s.question.empty());
        CHECK(s.question.back() == '?');
        // chained: step i's first operand is step i-1's rendered result
        for (size_t j = 1; j < s.steps.size(); ++j) {
            CHECK(decimal_render(parse_step(s.steps[j]).a) ==
                  decimal_render(parse_step(s.steps[j - 1]).c));
        }
        CHECK(s.answer == decimal_render(parse_step(s.steps.back()).c));
    }
}

TEST_CASE("generation is a pure function of (spec, seed, index)") {
    CorpusSpec spec;
    Sample a = generate_sample(spec, 42, 17);
    Sample b = generate_sample(spec, 42, 17);
    CHECK(a.question == b.question);
    CHECK(a.steps == b.steps);
    CHECK(a.answer == b.answer);

    Sample c = generate_sample(spec, 43, 17);
    Sample d = generate_sample(spec, 42, 18);
    CHECK((a.question != c.question || a.steps != c.steps));
    CHECK((a.question != d.question || a.steps != d.steps));
}

TEST_CASE("step-count histogram tracks the configured distribution") {
    CorpusSpec spec;
    spec.step_distribution = {{1, 0.2}, {2, 0.5}, {3, 0.3}};
    const size_t n = 20000;
    std::map<int, int> hist;
    for (size_t i = 0; i < n; ++i) {
        hist[static_cast<int>(generate_sample(spec, 11, i).steps.size())] += 1;
    }
    CHECK(hist.size() == 3);
    CHECK(std::abs(hist[1] / double(n) - 0.2) < 0.02);
    CHECK(std::abs(hist[2] / double(n) - 0.5) < 0.02);
    CHECK(std::abs(hist[3] / double(n) - 0.3) < 0.02);
}

TEST_CASE("operand magnitudes stay within the configured bound") {
    CorpusSpec spec;
    spec.step_distribution = {{8, 1.0}};  // long chains stress the bound
    spec.max_abs_value = 10000;
    for (uint64_t i = 0; i < 200; ++i) {
        Sample s = generate_sample(spec, 3, i);
        for (const auto& step : s.steps) {
            CHECK(std::abs(parse_step(step).c.units) <= spec.max_abs_value * Decimal::scale);
        }
    }
}

TEST_CASE("impossible specs hit the retry bound") {
    CorpusSpec spec;
    spec.operand_min = 0;
    spec.operand_max = 0;
    spec.operators = {Op::divide};  // division by zero forever
    spec.max_retries = 16;
    CHECK_THROWS_AS(generate_sample(spec, 1, 0), Error);
}

TEST_CASE("jsonl round trip with meta sidecar") {
    CorpusSpec spec;
    std::vector<Sample> samples = generate_corpus(spec, 5, 50);
    const std::string path = "/tmp/rim_test_corpus.jsonl";
    write_corpus(path, samples, spec, 5);
    std::vector<Sample> back = read_jsonl(path);
    REQUIRE(back.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(back[i].question == samples[i].question);
        CHECK(back[i].steps == samples[i].steps);
        CHECK(back[i].answer == samples[i].answer);
    }
    const std::string meta = read_text_file(path + ".meta.json");
    CHECK(meta.find("spec_hash") != std::string::npos);
    std::remove(path.c_str());
    std::remove((path + ".meta.json").c_str());
}

TEST_CASE("corpus spec json round trip preserves the hash") {
    CorpusSpec spec;
    spec.step_distribution = {{1, 0.5}, {4, 0.5}};
    spec.operators = {Op::add, Op::mul};
    CorpusSpec back = corpus_spec_from_json(corpus_spec_to_json(spec));
    CHECK(corpus_spec_hash(back) == corpus_spec_hash(spec));
    CHECK(back.operand_min == spec.operand_min);
    CHECK(back.operators.size() == 2);
}
