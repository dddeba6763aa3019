#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <deque>
#include <mutex>
#include <thread>

#include "riskpref/agents.hpp"

#include <httplib.h>

using namespace riskpref;

namespace {

const std::string kData = RISKPREF_DATA_DIR;

// Replays a fixed script of replies; nullopt entries simulate transport failures.
class ScriptedTransport final : public ChatTransport {
public:
    explicit ScriptedTransport(std::deque<std::optional<std::string>> script, std::string fallback = "A")
        : script_(std::move(script)), fallback_(std::move(fallback)) {}
    std::optional<std::string> complete(const PromptPayload& payload, const GenerationParams&) override {
        std::lock_guard lock(mutex_);
        ++calls;
        last = payload;
        if (script_.empty()) return fallback_;
        auto r = script_.front();
        script_.pop_front();
        return r;
    }
    int calls = 0;
    PromptPayload last;

private:
    std::mutex mutex_;
    std::deque<std::optional<std::string>> script_;
    std::string fallback_;
};

ChoiceQuestion question(std::vector<char> labels = {'A', 'B'}) {
    return make_question("q", QuestionMode::DiffEV, {Lottery({{300.0, 0.5}, {100.0, 0.5}}), Lottery({{150.0, 1.0}})},
                         std::move(labels));
}

AgentConfig external_config() {
    AgentConfig c;
    c.kind = AgentKind::External;
    c.endpoint.base_url = "http://127.0.0.1:1";
    c.endpoint.model = "mock";
    c.endpoint.backoff_seconds = 0.0;
    return c;
}

}  // namespace

TEST_CASE("tone variants") {
    for (PromptTone t : {PromptTone::Direct, PromptTone::Cautious, PromptTone::Aggressive}) {
        const auto v = tone_variants(t);
        REQUIRE(v.size() == 5);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK_FALSE(v[i].empty());
            CHECK(tone_preamble(t, static_cast<int>(i) + 1) == v[i]);
        }
        CHECK_THROWS(tone_preamble(t, 6));
    }
    CHECK(tone_variants(PromptTone::Cautious)[0] != tone_variants(PromptTone::Aggressive)[0]);
}

TEST_CASE("choice prompts") {
    CHECK(letter_list(2) == "A or B");
    CHECK(letter_list(4) == "A, B, C or D");
    const auto q = question();
    PromptSpec chat;
    const auto p = build_prompt(q, chat);
    REQUIRE(p.messages.size() == 2);
    CHECK(p.messages[0].role == "system");
    CHECK(p.messages[0].content == kChatSystemMessage);
    CHECK(p.user_text() == q.text + "\nAnswer with a single letter: A or B.");

    PromptSpec plain;
    plain.chat_style = false;
    const auto pp = build_prompt(q, plain);
    REQUIRE(pp.messages.size() == 1);
    CHECK(pp.user_text().rfind("Follow this format and choose either A or B based on the options provided.", 0) == 0);
    CHECK(pp.user_text().ends_with("Answer:"));

    PromptSpec toned;
    toned.tone = PromptTone::Cautious;
    toned.variant = 2;
    const auto pt = build_prompt(q, toned);
    CHECK(pt.user_text().rfind(std::string(tone_preamble(PromptTone::Cautious, 2)) + "\n\n", 0) == 0);

    const std::vector<IclExample> pool{{question(), 'A'}, {question({'B', 'A'}), 'B'}};
    PromptSpec icl;
    icl.icl_examples = 2;
    const auto pi = build_prompt(q, icl, pool);
    CHECK(pi.user_text().find(pool[1].question.text) != std::string::npos);
    icl.icl_examples = 3;
    CHECK_THROWS(build_prompt(q, icl, pool));

    PromptSpec bad;
    bad.variant = 0;
    CHECK_FALSE(bad.violations().empty());
}

TEST_CASE("questionnaire prompts") {
    const auto gl = load_gl_items(kData + "/gl_items.json");
    const auto p = build_item_prompt(gl[0], PromptSpec{});
    CHECK(p.user_text().rfind(gl[0].text, 0) == 0);
    CHECK(p.user_text().find("\n(a) " + gl[0].choices[0].text) != std::string::npos);

    const auto dospert = load_dospert_items(kData + "/dospert_items.json");
    const auto taking = dospert_prompt_text(dospert[0], Dimension::RiskTaking);
    const auto perception = dospert_prompt_text(dospert[0], Dimension::RiskPerception);
    CHECK(taking != perception);
    CHECK(taking.find(dospert[0].text) != std::string::npos);
    CHECK(taking.find('7') != std::string::npos);
}

TEST_CASE("request body") {
    PromptPayload payload{true, {{"system", "s"}, {"user", "u"}}};
    const auto j = HttpChatTransport::request_body(payload, GenerationParams{}, "m");
    CHECK(j["model"] == "m");
    CHECK(j["messages"].size() == 2);
    CHECK(j["messages"][1]["content"] == "u");
    CHECK(j["temperature"] == 0.7);
    CHECK(j["top_p"] == 0.9);
    CHECK(j["max_tokens"] == 50);
}

TEST_CASE("external query retries") {
    ScriptedTransport t({std::nullopt, std::string("I refuse"), std::string("Answer: B")});
    const auto r = external_query(t, PromptPayload{}, GenerationParams{}, choice_extractor("AB"), 5);
    CHECK(r.value == 'B');
    CHECK(r.attempts == 3);
    CHECK(t.calls == 3);

    ScriptedTransport bad({}, "no idea");
    const auto r2 = external_query(bad, PromptPayload{}, GenerationParams{}, choice_extractor("AB"), 5);
    CHECK_FALSE(r2.value);
    CHECK(r2.attempts == 5);
    CHECK(r2.raw_text == "no idea");
    CHECK(bad.calls == 5);

    ScriptedTransport down({std::nullopt, std::nullopt, std::nullopt}, "A");
    const auto start = std::chrono::steady_clock::now();
    const auto r3 = external_query(down, PromptPayload{}, GenerationParams{}, choice_extractor("AB"), 3, 0.02);
    const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK_FALSE(r3.value);
    CHECK(r3.raw_text.empty());
    // 0.02 then 0.04 seconds; no sleep after the final attempt.
    CHECK(waited >= 0.06);
    CHECK(waited < 1.0);
}

TEST_CASE("external agent maps letters to options") {
    auto t = std::make_shared<ScriptedTransport>(std::deque<std::optional<std::string>>{std::string("A")});
    ExternalAgent agent(t, external_config());
    RandomStream rng(1);
    const auto swapped = question({'B', 'A'});
    const auto a = agent.answer_choice(swapped, PromptSpec{}, {}, rng);
    REQUIRE(a.value);
    CHECK(*a.value == 1);
    CHECK(agent.is_external());
    CHECK(agent.id() == "mock");
}

TEST_CASE("synthetic agents") {
    const ChoiceModelSpec linear{UtilityModel::make(Family::Linear), {}, kArgmaxBeta};
    SyntheticAgent agent(linear);
    RandomStream rng(3);
    CHECK(agent.answer_choice(question(), PromptSpec{}, {}, rng).value == 0);
    CHECK(agent.gamble_preference() == doctest::Approx(0.5));

    const ChoiceModelSpec averse{UtilityModel::make(Family::CRRA, {{"gamma", 2.0}}), {}, 0.01};
    SyntheticAgent cautious(averse);
    CHECK(cautious.gamble_preference() < 0.5);

    const auto gl = load_gl_items(kData + "/gl_items.json");
    const auto a = agent.answer_item(gl[0], PromptSpec{}, rng);
    REQUIRE(a.value);
    CHECK(gl[0].choice(static_cast<char>(*a.value)) != nullptr);

    const auto items = load_dospert_items(kData + "/dospert_items.json");
    for (int i = 0; i < 50; ++i) {
        const auto v = cautious.answer_likert(items[0], Dimension::RiskTaking, PromptSpec{}, rng).value;
        REQUIRE(v);
        CHECK(*v >= 1);
        CHECK(*v <= 7);
    }
}

TEST_CASE("sessions are deterministic and resumable") {
    const ChoiceModelSpec spec{UtilityModel::make(Family::CRRA, {{"gamma", 0.5}}), {}, 3.0};
    SyntheticAgent agent(spec);
    const auto items = load_gl_items(kData + "/gl_items.json");
    // gl-02 has $0 outcomes, outside the CRRA domain: those rows are invalid.
    const auto raw = run_gl_session(agent, items, PromptSpec{}, 1, 11);
    for (const auto& r : raw) CHECK(r.letter.has_value() == (r.item_id != "gl-02"));
    SyntheticAgent shifted(spec, 100.0);
    for (const auto& r : run_gl_session(shifted, items, PromptSpec{}, 1, 11)) CHECK(r.letter);

    const auto first = run_gl_session(agent, items, PromptSpec{}, 4, 11);
    const auto second = run_gl_session(agent, items, PromptSpec{}, 4, 11);
    REQUIRE(first.size() == items.size() * 4);
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].item_id == second[i].item_id);
        CHECK(first[i].letter == second[i].letter);
    }

    auto partial = first;
    partial.resize(10);
    partial[3].raw_text = "kept";
    const auto resumed = run_gl_session(agent, items, PromptSpec{}, 4, 11, partial);
    REQUIRE(resumed.size() == first.size());
    CHECK(resumed[3].raw_text == "kept");
    for (std::size_t i = 10; i < first.size(); ++i) CHECK(resumed[i].letter == first[i].letter);

    GeneratorConfig g;
    g.seed = 5;
    const auto qs = generate_dataset(g, QuestionMode::DiffEV, 50);
    const auto s1 = run_choice_session(agent, qs, PromptSpec{}, {}, 9);
    const auto s2 = run_choice_session(agent, qs, PromptSpec{}, {}, 9);
    REQUIRE(s1.records.size() == 50);
    for (std::size_t i = 0; i < 50; ++i) CHECK(s1.records[i].chosen_index == s2.records[i].chosen_index);

    auto t = std::make_shared<ScriptedTransport>(std::deque<std::optional<std::string>>{}, "not sure");
    ExternalAgent silent(t, external_config());
    const auto s3 = run_choice_session(silent, qs, PromptSpec{}, {}, 9);
    CHECK(s3.records.empty());
    CHECK(s3.invalid_question_ids.size() == 50);
    CHECK(t->calls == 250);

    const auto dospert = load_dospert_items(kData + "/dospert_items.json");
    const auto d = run_dospert_session(agent, dospert, PromptSpec{}, 2, 4);
    CHECK(d.size() == dospert.size() * 2 * 2);
}

TEST_CASE("HTTP transport against a local server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++hits;
        seen_auth = req.get_header_value("Authorization");
        if (n == 1) {
            res.status = 503;
            return;
        }
        const auto body = nlohmann::json::parse(req.body);
        const std::string reply = body["model"] == "mock" ? "Answer: B" : "?";
        res.set_content(nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", reply}}}}}}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("RISKPREF_TEST_TOKEN", "sekret", 1);
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "mock";
    cfg.token_env = "RISKPREF_TEST_TOKEN";
    cfg.timeout_seconds = 5.0;
    HttpChatTransport transport(cfg);
    const auto r = external_query(transport, build_prompt(question(), PromptSpec{}), GenerationParams{},
                                  choice_extractor("AB"), 5);
    CHECK(r.value == 'B');
    CHECK(r.attempts == 2);
    CHECK(seen_auth == "Bearer sekret");

    server.stop();
    th.join();
    CHECK_FALSE(transport.complete(PromptPayload{true, {{"user", "x"}}}, GenerationParams{}));
}
