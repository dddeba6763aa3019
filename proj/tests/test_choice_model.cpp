#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "riskpref/choice_model.hpp"

using namespace riskpref;

namespace {

ChoiceModelSpec linear(double beta) { return {UtilityModel::make(Family::Linear), {}, beta}; }

ChoiceQuestion pair(Lottery a, Lottery b, std::vector<char> labels = {'A', 'B'}) {
    return make_question("q", QuestionMode::DiffEV, {std::move(a), std::move(b)}, std::move(labels));
}

}  // namespace

TEST_CASE("two-option choice probability") {
    const auto q = pair(Lottery({{250.0, 1.0}}), Lottery({{150.0, 1.0}}));
    CHECK(choice_probability(linear(0.01), q) == doctest::Approx(0.731059).epsilon(1e-6));
    CHECK(choice_probability(linear(0.0), q) == 0.5);
    const auto tie = pair(Lottery({{100.0, 0.5}, {200.0, 0.5}}), Lottery({{150.0, 1.0}}));
    CHECK(choice_probability(linear(3.0), tie) == 0.5);
    CHECK(logistic(800.0) == 1.0);
    CHECK(logistic(-800.0) == 0.0);
    CHECK(logistic(-30.0) > 0.0);

    const auto swapped = pair(q.options[1], q.options[0]);
    CHECK(choice_probability(linear(0.013), q) + choice_probability(linear(0.013), swapped) == 1.0);

    double last = 0.5;
    for (double beta : {0.001, 0.005, 0.01, 0.02, 0.04}) {
        const double p = choice_probability(linear(beta), q);
        CHECK(p > last);
        last = p;
    }
}

TEST_CASE("scale coupling") {
    // Tripling every reward triples linear utilities; beta / 3 must undo it.
    const auto q = pair(Lottery({{300.0, 0.4}, {50.0, 0.6}}), Lottery({{140.0, 1.0}}));
    const auto q3 = pair(Lottery({{900.0, 0.4}, {150.0, 0.6}}), Lottery({{420.0, 1.0}}));
    CHECK(choice_probability(linear(0.02 / 3.0), q3) == doctest::Approx(choice_probability(linear(0.02), q)).epsilon(1e-12));
}

TEST_CASE("label sampling") {
    RandomStream rng(4);
    CHECK(sample_label(1.0, rng) == 1);
    CHECK(sample_label(0.0, rng) == 0);
    int ones = 0;
    for (int i = 0; i < 10000; ++i) ones += sample_label(0.7, rng);
    CHECK(std::abs(ones / 10000.0 - 0.7) < 0.015);
    CHECK_THROWS(sample_label(1.2, rng));
}

TEST_CASE("prediction rules") {
    const auto q = pair(Lottery({{260.0, 1.0}}), Lottery({{200.0, 1.0}}));
    CHECK(predict(linear(0.01), q) == 0);
    const auto tie = pair(Lottery({{100.0, 0.5}, {200.0, 0.5}}), Lottery({{150.0, 1.0}}));
    CHECK(predict(linear(1.0), tie) == 1);
    CHECK(predict(linear(kArgmaxBeta), tie) == 1);

    const auto four = make_question("f", QuestionMode::FourOption,
                                    {Lottery({{100.0, 1.0}}), Lottery({{300.0, 0.5}, {100.0, 0.5}}),
                                     Lottery({{90.0, 1.0}}), Lottery({{500.0, 0.5}, {1.0, 0.5}})},
                                    {'C', 'A', 'D', 'B'});
    CHECK(predict(linear(kArgmaxBeta), four) == 3);
    const auto relabeled = make_question("f", QuestionMode::FourOption, four.options, {'A', 'B', 'C', 'D'});
    CHECK(predict(linear(kArgmaxBeta), relabeled) == 3);
    const auto probs = choice_probabilities(linear(0.01), four);
    double total = 0.0;
    for (double p : probs) total += p;
    CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("accuracy and risky option") {
    const std::vector<std::size_t> a{0, 1, 1, 0};
    const std::vector<std::size_t> b{0, 1, 0, 1};
    CHECK(accuracy(a, a) == 1.0);
    CHECK(accuracy(a, b) == 0.5);
    CHECK_THROWS(accuracy(a, std::vector<std::size_t>{0}));

    CHECK(risky_option_index(pair(Lottery({{800.0, 0.5}, {200.0, 0.5}}), Lottery({{100.0, 0.6}, {200.0, 0.4}}))) == 0);
    CHECK(risky_option_index(pair(Lottery({{1.0, 1.0}}), Lottery({{2.0, 1.0}}))) == 0);
    CHECK(risky_option_index(pair(Lottery({{5.0, 1.0}}), Lottery({{1.0, 0.5}, {9.0, 0.5}}))) == 1);
    const auto r = make_record(pair(Lottery({{5.0, 1.0}}), Lottery({{1.0, 0.5}, {9.0, 0.5}})), 1);
    CHECK(r.label_y == 1);
    CHECK(record_from_json(record_to_json(r)).chosen_index == 1);
}

TEST_CASE("oracle self-test at a calibrated beta") {
    GeneratorConfig g;
    g.seed = 31;
    const auto calib = generate_dataset(g, QuestionMode::DiffEV, 3000);
    const auto crra = UtilityModel::make(Family::CRRA, {{"gamma", -5.0}});
    const auto c = calibrate_beta(crra, {}, calib, 0.9987, 5);
    CHECK(std::abs(c.achieved_accuracy - 0.9987) < 0.002);
    g.seed = 32;
    const auto fresh = generate_dataset(g, QuestionMode::DiffEV, 2500);
    RandomStream rng(8);
    CHECK(std::abs(oracle_accuracy({crra, {}, c.beta}, fresh, rng) - 0.9987) < 0.01);
}
