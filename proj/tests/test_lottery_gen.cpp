#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "riskpref/lottery_gen.hpp"

using namespace riskpref;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

GeneratorConfig seeded(std::uint64_t seed) {
    GeneratorConfig c;
    c.seed = seed;
    return c;
}

}  // namespace

TEST_CASE("EV equation for forced draws") {
    const auto a = lottery_from_draws(500.0, 0.5, 200.0);
    REQUIRE(a);
    CHECK(a->outcomes()[0].reward == doctest::Approx(800.0));
    const auto b = lottery_from_draws(100.0, 0.2, 50.0);
    REQUIRE(b);
    CHECK(b->outcomes()[0].reward == doctest::Approx(300.0));
    CHECK_FALSE(lottery_from_draws(100.0, 0.2, 500.0));
}

TEST_CASE("moments") {
    auto m = lottery_moments(Lottery({{800.0, 0.5}, {200.0, 0.5}}));
    CHECK(m.ev == doctest::Approx(500.0));
    CHECK(m.variance == doctest::Approx(90000.0));
    m = lottery_moments(Lottery({{42.0, 1.0}}));
    CHECK(m.ev == 42.0);
    CHECK(m.variance == 0.0);
    m = lottery_moments(Lottery({{100.0, 0.6}, {200.0, 0.4}}));
    CHECK(m.ev == doctest::Approx(140.0));
    CHECK(m.variance == doctest::Approx(2400.0));
}

TEST_CASE("difference filter") {
    const GeneratorConfig c;
    CHECK_FALSE(passes_difference_filter({500.0, 1000.0}, {510.0, 1000.0}, c));
    CHECK(passes_difference_filter({500.0, 1000.0}, {530.0, 1000.0}, c));
    CHECK(passes_difference_filter({500.0, 1000.0}, {500.0, 1100.0}, c));
}

TEST_CASE("rendering") {
    const auto q = make_question("x", QuestionMode::DiffEV,
                                 {Lottery({{100.0, 0.5}, {200.0, 0.5}}), Lottery({{120.0, 0.6}, {140.0, 0.4}})},
                                 {'A', 'B'});
    CHECK(q.text ==
          "Which of the following options do you prefer?\n"
          "A: A 50% chance to win $100 and a 50% chance to win $200.\n"
          "B: A 60% chance to win $120 and a 40% chance to win $140.");
    const auto swapped = make_question("x", QuestionMode::DiffEV, q.options, {'B', 'A'});
    CHECK(swapped.text ==
          "Which of the following options do you prefer?\n"
          "A: A 60% chance to win $120 and a 40% chance to win $140.\n"
          "B: A 50% chance to win $100 and a 50% chance to win $200.");
    CHECK(swapped.option_for_label('A') == 1);

    RandomStream rng(9);
    const auto four = build_question(seeded(9), QuestionMode::FourOption, rng, "f");
    CHECK(four.option_count() == 4);
    std::istringstream lines(four.text);
    std::string line;
    std::getline(lines, line);
    for (char c : {'A', 'B', 'C', 'D'}) {
        REQUIRE(std::getline(lines, line));
        CHECK(line.rfind(std::string(1, c) + ": ", 0) == 0);
    }
}

TEST_CASE("dataset invariants") {
    const auto cfg = seeded(21);
    const auto same = generate_dataset(cfg, QuestionMode::SameEV, 10000);
    double max_gap = 0.0;
    int first_is_a = 0;
    for (const auto& q : same) {
        max_gap = std::max(max_gap, std::abs(q.moments[0].ev - q.moments[1].ev));
        first_is_a += q.labels[0] == 'A';
    }
    CHECK(max_gap < 1e-6);
    CHECK(std::abs(first_is_a / 10000.0 - 0.5) < 0.02);

    RandomStream rng(cfg.seed, 77);
    int worst_retries = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto d = draw_question(cfg, QuestionMode::DiffEV, rng, "d");
        worst_retries = std::max(worst_retries, d.rejected_pairs);
        const auto& q = d.question;
        CHECK(passes_difference_filter(q.moments[0], q.moments[1], cfg));
        for (const auto& l : q.options) {
            double total = 0.0;
            for (const auto& o : l.outcomes()) {
                CHECK(o.reward > 0.0);
                CHECK(o.probability >= cfg.p_lo - 1e-12);
                CHECK(o.probability <= cfg.p_hi + 1e-12);
                total += o.probability;
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        }
        const auto m = lottery_moments(q.options[0]);
        CHECK(m.ev == doctest::Approx(q.moments[0].ev).epsilon(1e-12));
    }
    CHECK(worst_retries < 1000);
}

TEST_CASE("reproducible files and sharding") {
    const auto dir = std::filesystem::temp_directory_path() / "riskpref_test_lottery_gen";
    std::filesystem::create_directories(dir);
    const auto cfg = seeded(7);
    write_questions_jsonl((dir / "a.jsonl").string(), generate_dataset(cfg, QuestionMode::DiffEV, 500));
    write_questions_jsonl((dir / "b.jsonl").string(), generate_dataset(cfg, QuestionMode::DiffEV, 500));
    CHECK(slurp((dir / "a.jsonl").string()) == slurp((dir / "b.jsonl").string()));

    const auto full = generate_dataset(cfg, QuestionMode::FourOption, 40);
    const auto tail = generate_dataset(cfg, QuestionMode::FourOption, 20, 20);
    for (std::size_t i = 0; i < 20; ++i) CHECK(question_to_json(full[20 + i]) == question_to_json(tail[i]));

    const auto back = read_questions_jsonl((dir / "a.jsonl").string());
    REQUIRE(back.size() == 500);
    CHECK(question_to_json(back[17]) == question_to_json(generate_dataset(cfg, QuestionMode::DiffEV, 500)[17]));
    std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
    GeneratorConfig c;
    c.p_lo = 0.9;
    CHECK_FALSE(c.violations().empty());
    RandomStream rng(1);
    CHECK_THROWS_AS(build_question(c, QuestionMode::SameEV, rng, "x"), std::invalid_argument);
    CHECK(parse_mode("same-ev") == QuestionMode::SameEV);
    CHECK_THROWS(parse_mode("five"));
}
