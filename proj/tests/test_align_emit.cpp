#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "riskpref/align_emit.hpp"

using namespace riskpref;

namespace {

std::vector<ChoiceQuestion> dataset(QuestionMode mode, std::size_t n, std::uint64_t seed) {
    GeneratorConfig g;
    g.seed = seed;
    return generate_dataset(g, mode, n);
}

}  // namespace

TEST_CASE("targets") {
    CHECK(named_targets().size() == 6);
    const auto t = make_target("crra-0.71");
    CHECK(t.model.utility.family == Family::CRRA);
    CHECK(t.model.utility.param("gamma") == 0.71);
    CHECK(t.model.beta_sensitivity == doctest::Approx(3.429566756));
    CHECK(make_target("crra-0.71", true).model.beta_sensitivity == doctest::Approx(2.951732983));
    CHECK(find_target("prospect").utility().param("r0") == 500.0);
    CHECK_THROWS(make_target("crra-2"));
    CHECK(parse_label_mode("argmax") == LabelMode::Argmax);
    CHECK_THROWS(parse_label_mode("greedy"));
}

TEST_CASE("prompt format") {
    const auto q = make_question("x", QuestionMode::DiffEV, {Lottery({{100.0, 1.0}}), Lottery({{80.0, 1.0}})}, {'B', 'A'});
    const auto p = alignment_prompt(q);
    CHECK(p.rfind(std::string(kSftInstruction) + "\nQuestion: ", 0) == 0);
    CHECK(p.ends_with("\nAnswer:"));
    CHECK(p.find("A: " + render_lottery(q.options[1])) < p.find("B: " + render_lottery(q.options[0])));
}

TEST_CASE("argmax linear SFT picks the higher expected value") {
    const auto qs = dataset(QuestionMode::DiffEV, 500, 3);
    TargetSpec linear;
    linear.model = {UtilityModel::make(Family::Linear), {}, 1.0};
    linear.label_mode = LabelMode::Argmax;
    const auto sft = emit_sft(qs, linear, 1);
    REQUIRE(sft.size() == qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const std::size_t hi = qs[i].moments[0].ev > qs[i].moments[1].ev ? 0 : 1;
        CHECK(sft[i].completion == std::string(1, qs[i].labels[hi]));
        CHECK(is_valid_sft_json(sft_to_json(sft[i])));
    }
}

TEST_CASE("sampled SFT follows the choice law and is seeded") {
    const auto qs = dataset(QuestionMode::DiffEV, 3000, 4);
    const auto t = make_target("crra-0.71");
    const auto a = emit_sft(qs, t, 8);
    const auto b = emit_sft(qs, t, 8);
    double agree_with_argmax = 0.0;
    for (std::size_t i = 0; i < qs.size(); ++i) {
        CHECK(a[i].completion == b[i].completion);
        const std::size_t best = predict({t.model.utility, {}, kArgmaxBeta}, qs[i]);
        agree_with_argmax += a[i].completion[0] == qs[i].labels[best];
    }
    // The calibrated temperature targets about 96.8% oracle accuracy.
    CHECK(std::abs(agree_with_argmax / 3000.0 - 0.9683) < 0.01);
}

TEST_CASE("DPO ordering, ties and presentation invariance") {
    const auto qs = dataset(QuestionMode::DiffEV, 400, 5);
    const auto t = make_target("cara-0.1");
    const auto e = emit_dpo(qs, t);
    CHECK(e.records.size() + e.dropped_ties == qs.size());
    std::size_t k = 0;
    for (const auto& q : qs) {
        const auto u = option_utilities(t.model, q);
        if (u[0] == u[1]) continue;
        const auto& r = e.records[k++];
        CHECK(u[q.option_for_label(r.chosen[0])] > u[q.option_for_label(r.rejected[0])]);
        CHECK(is_valid_dpo_json(dpo_to_json(r)));

        std::vector<char> flipped{q.labels[1], q.labels[0]};
        const auto swapped = make_question(q.id, q.mode, q.options, flipped);
        const auto one = std::vector<ChoiceQuestion>{swapped};
        const auto rs = emit_dpo(one, t).records.at(0);
        CHECK(swapped.option_for_label(rs.chosen[0]) == q.option_for_label(r.chosen[0]));
    }

    const auto tie = make_question("t", QuestionMode::SameEV,
                                   {Lottery({{100.0, 0.5}, {200.0, 0.5}}), Lottery({{150.0, 1.0}})}, {'A', 'B'});
    TargetSpec linear;
    linear.model = {UtilityModel::make(Family::Linear), {}, 1.0};
    const auto ties = emit_dpo(std::vector<ChoiceQuestion>{tie}, linear);
    CHECK(ties.records.empty());
    CHECK(ties.dropped_ties == 1);

    const auto four = dataset(QuestionMode::FourOption, 1, 6);
    CHECK_THROWS(emit_dpo(four, t));
}

TEST_CASE("schema checks") {
    CHECK_FALSE(is_valid_sft_json({{"prompt", "p"}, {"completion", "AB"}}));
    CHECK_FALSE(is_valid_sft_json({{"prompt", "p"}, {"completion", "A"}, {"extra", 1}}));
    CHECK_FALSE(is_valid_dpo_json({{"prompt", "p"}, {"chosen", "A"}, {"rejected", "A"}}));
    CHECK(is_valid_dpo_json({{"prompt", "p"}, {"chosen", "A"}, {"rejected", "B"}}));
}

TEST_CASE("JSONL files") {
    const auto dir = std::filesystem::temp_directory_path() / "riskpref_test_align_emit";
    std::filesystem::create_directories(dir);
    const auto qs = dataset(QuestionMode::DiffEV, 50, 7);
    const auto t = make_target("prospect");
    write_sft_jsonl((dir / "sft.jsonl").string(), emit_sft(qs, t, 1));
    write_dpo_jsonl((dir / "dpo.jsonl").string(), emit_dpo(qs, t).records);
    for (const char* name : {"sft.jsonl", "dpo.jsonl"}) {
        std::ifstream in(dir / name);
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            const auto j = nlohmann::json::parse(line);
            CHECK((std::string(name) == "sft.jsonl" ? is_valid_sft_json(j) : is_valid_dpo_json(j)));
            ++n;
        }
        CHECK(n > 40);
    }
    std::filesystem::remove_all(dir);
}
