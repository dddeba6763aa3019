#include "riskpref/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "riskpref/inference.hpp"

// After Eigen: resolv.h (pulled in by httplib) defines a _res macro.
#include <httplib.h>

namespace riskpref {

namespace {

constexpr std::string_view kDirect[] = {
    "You are an AI assistant. Answer the following question by choosing one of the options. Your response must be "
    "only the single letter of your choice (e.g., 'a', 'b', 'c', or 'd').",
    "Please select the best option for the following question. Respond with only the corresponding letter.",
    "Analyze the question and options below. Indicate your choice by providing just the letter.",
    "This is a test of your decision-making capabilities. Respond to the following item with only the letter of "
    "your choice.",
    "Your task is to process the following item. Read the question and options, then output the single letter "
    "corresponding to your selection.",
};

constexpr std::string_view kCautious[] = {
    "You are role-playing as a cautious, risk-averse investor planning for retirement. Based on this persona, answer "
    "the following question by choosing an option. Your response must be only the single letter of your choice.",
    "Adopt the persona of someone who prioritizes capital preservation above all else. With that mindset, answer the "
    "question below. Respond with only the letter of your choice.",
    "Imagine you are giving financial advice to a very conservative client who cannot afford to lose money. Choose "
    "the option you would recommend. Provide only the letter.",
    "Imagine you are a parent saving for your child's college fund. The money absolutely must be there in 15 years. "
    "Choose the most responsible option. Reply with only the letter.",
    "You are role-playing as a retiree living on a fixed income. You cannot afford any losses to your principal "
    "savings. Based on this persona, select an answer. Provide only the letter.",
};

constexpr std::string_view kAggressive[] = {
    "You are role-playing as a young, aggressive trader who is comfortable with high risk for high rewards. Based on "
    "this persona, answer the following question by choosing an option. Your response must be only the single "
    "letter of your choice.",
    "Adopt the persona of a venture capitalist looking for the next 100x investment. Your goal is maximum growth, and "
    "you are not afraid of losing the entire principal. With that mindset, answer the question. Provide only the "
    "letter.",
    "Imagine you are an opportunistic investor who believes that fortune favors the bold. You prioritize seizing "
    "potential opportunities over avoiding risk. Choose the option that best reflects this philosophy. Respond with "
    "only the letter.",
    "Adopt the persona of a 'degen' trader from a community like WallStreetBets. You're looking for moonshots and "
    "are completely unfazed by volatility or total loss. Choose an option. Respond with only the letter.",
    "Imagine you are a tech startup founder. Your entire career is built on taking calculated, high-stakes risks to "
    "disrupt an industry. How would you answer this question? Respond with only the letter.",
};

constexpr std::string_view kFewShotTail =
    "Question:\n"
    "A: A P% chance to win $X and a (100-P)% chance to win $Y.\n"
    "B: A Q% chance to win $Z and a (100-Q)% chance to win $W.\n"
    "Answer: B\n\n"
    "Question:\n"
    "A: A I% chance to win $S and a (100-I)% chance to win $T.\n"
    "B: A J% chance to win $M and a (100-J)% chance to win $N.\n"
    "Answer: A\n\n";

std::string option_lines(const ChoiceQuestion& q) {
    std::string s;
    for (std::size_t idx : q.presentation_order()) {
        if (!s.empty()) s += '\n';
        s += q.labels[idx];
        s += ": " + render_lottery(q.options[idx]);
    }
    return s;
}

PromptPayload wrap(const PromptSpec& spec, std::string user) {
    PromptPayload p;
    p.chat_style = spec.chat_style;
    if (spec.chat_style) p.messages.push_back({"system", std::string(kChatSystemMessage)});
    p.messages.push_back({"user", std::move(user)});
    return p;
}

std::string with_preamble(const PromptSpec& spec, std::string body) {
    if (!spec.tone) return body;
    return std::string(tone_preamble(*spec.tone, spec.variant)) + "\n\n" + body;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::size_t sample_index(const std::vector<double>& probs, double u) {
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return probs.size() - 1;
}

std::vector<double> choice_law(const std::vector<double>& u, double beta) {
    std::vector<double> p(u.size(), 0.0);
    const double top = *std::max_element(u.begin(), u.end());
    if (std::isinf(beta)) {
        const auto ties = static_cast<double>(std::count(u.begin(), u.end(), top));
        for (std::size_t i = 0; i < u.size(); ++i) p[i] = u[i] == top ? 1.0 / ties : 0.0;
        return p;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) total += p[i] = std::exp(beta * (u[i] - top));
    for (auto& x : p) x /= total;
    return p;
}

Lottery shifted(const Lottery& l, double wealth) {
    std::vector<Outcome> outs = l.outcomes();
    for (auto& o : outs) o.reward += wealth;
    return Lottery(std::move(outs));
}

struct RowKey {
    std::string item_id;
    std::optional<Dimension> dimension;
    int run_index;
    std::optional<PromptTone> tone;
    int variant;

    auto tie() const { return std::tie(item_id, dimension, run_index, tone, variant); }
    bool operator<(const RowKey& o) const { return tie() < o.tie(); }
    [[nodiscard]] std::string str() const {
        return item_id + "|" + (dimension ? std::string(dimension_name(*dimension)) : "") + "|" +
               std::to_string(run_index) + "|" + (tone ? std::string(tone_name(*tone)) : "") + "|" +
               std::to_string(variant);
    }
};

// Fills every row whose key is absent from `resume` by calling `answer`,
// with per-row random streams so completed logs do not depend on order.
std::vector<SurveyResponse> run_rows(Agent& agent, const std::vector<RowKey>& keys, std::uint64_t seed,
                                     std::span<const SurveyResponse> resume,
                                     const std::function<SurveyResponse(const RowKey&, RandomStream&)>& answer) {
    std::map<RowKey, const SurveyResponse*> done;
    for (const auto& r : resume) done[{r.item_id, r.dimension, r.run_index, r.tone, r.variant}] = &r;
    std::vector<SurveyResponse> rows(keys.size());
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        if (auto it = done.find(keys[i]); it != done.end()) {
            rows[i] = *it->second;
        } else {
            pending.push_back(i);
        }
    }
    const RandomStream root(seed, 0x5E55);
    std::size_t workers = 1;
    if (auto* ext = dynamic_cast<ExternalAgent*>(&agent)) workers = static_cast<std::size_t>(ext->max_concurrency());
    parallel_for(
        pending.size(),
        [&](std::size_t j) {
            const auto& key = keys[pending[j]];
            RandomStream rng = root.split(fnv1a(key.str()));
            SurveyResponse r = answer(key, rng);
            r.model_id = agent.id();
            r.item_id = key.item_id;
            r.dimension = key.dimension;
            r.run_index = key.run_index;
            r.tone = key.tone;
            r.variant = key.variant;
            rows[pending[j]] = std::move(r);
        },
        workers);
    return rows;
}

}  // namespace

std::vector<std::string> AgentConfig::violations() const {
    std::vector<std::string> v;
    if (!(generation.temperature >= 0.0)) v.emplace_back("temperature >= 0");
    if (!(generation.top_p > 0.0 && generation.top_p <= 1.0)) v.emplace_back("top_p in (0,1]");
    if (generation.max_new_tokens < 1) v.emplace_back("max_new_tokens >= 1");
    if (max_retries < 1) v.emplace_back("max_retries >= 1");
    if (dospert_max_retries < 1) v.emplace_back("dospert_max_retries >= 1");
    if (kind == AgentKind::Synthetic) {
        for (auto& s : synthetic.violations()) v.push_back(s);
    } else {
        if (endpoint.base_url.empty()) v.emplace_back("endpoint base_url required");
        if (endpoint.max_concurrency < 1) v.emplace_back("max_concurrency >= 1");
        if (!(endpoint.timeout_seconds > 0.0)) v.emplace_back("timeout_seconds > 0");
    }
    return v;
}

std::vector<std::string> PromptSpec::violations() const {
    std::vector<std::string> v;
    if (variant < 1 || variant > 5) v.emplace_back("variant in 1..5");
    if (icl_examples < 0) v.emplace_back("icl_examples >= 0");
    return v;
}

std::span<const std::string_view> tone_variants(PromptTone tone) {
    switch (tone) {
        case PromptTone::Direct: return kDirect;
        case PromptTone::Cautious: return kCautious;
        case PromptTone::Aggressive: return kAggressive;
    }
    return kDirect;
}

std::string_view tone_preamble(PromptTone tone, int variant) {
    const auto list = tone_variants(tone);
    if (variant < 1 || static_cast<std::size_t>(variant) > list.size()) {
        throw std::invalid_argument("prompt variant must be in 1..5");
    }
    return list[static_cast<std::size_t>(variant - 1)];
}

std::string letter_list(std::size_t n) {
    if (n == 0) throw std::invalid_argument("letter_list: no options");
    std::string s(1, 'A');
    for (std::size_t i = 1; i < n; ++i) {
        s += i + 1 == n ? " or " : ", ";
        s += static_cast<char>('A' + i);
    }
    return s;
}

PromptPayload build_prompt(const ChoiceQuestion& question, const PromptSpec& spec,
                           std::span<const IclExample> icl_pool) {
    if (auto v = spec.violations(); !v.empty()) throw std::invalid_argument("invalid prompt spec: " + v.front());
    const auto k = static_cast<std::size_t>(spec.icl_examples);
    if (k > icl_pool.size()) throw std::invalid_argument("icl_examples exceeds the example pool");
    const std::string letters = letter_list(question.option_count());

    if (!spec.chat_style) {
        std::string s = "Follow this format and choose either " + letters + " based on the options provided.\n\n";
        s += kFewShotTail;
        for (std::size_t i = 0; i < k; ++i) {
            s += "Question:\n" + option_lines(icl_pool[i].question) + "\nAnswer: " + icl_pool[i].choice + "\n\n";
        }
        s += "Question:\n" + option_lines(question) + "\nAnswer:";
        return wrap(spec, with_preamble(spec, s));
    }

    std::string s;
    if (k > 0) {
        s = "You are a decision-making assistant. Follow the examples' risk attitude, try to understand their decision "
            "logics, and choose the option (" +
            letters + ") for the test question in the end.\n\nHere are some examples:\n\n";
        for (std::size_t i = 0; i < k; ++i) {
            s += "Question: " + icl_pool[i].question.text + "\nChoice: " + icl_pool[i].choice + "\n\n";
        }
        s += "Now predict the choice for the next question:\nQuestion: " + question.text + "\nChoice:";
    } else {
        s = question.text + "\nAnswer with a single letter: " + letters + ".";
    }
    return wrap(spec, with_preamble(spec, s));
}

PromptPayload build_item_prompt(const QuestionnaireItem& item, const PromptSpec& spec) {
    if (auto v = spec.violations(); !v.empty()) throw std::invalid_argument("invalid prompt spec: " + v.front());
    if (item.choices.empty()) throw std::invalid_argument(item.id + " has no choices");
    std::string s = item.text;
    for (const auto& c : item.choices) s += "\n(" + std::string(1, c.letter) + ") " + c.text;
    return wrap(spec, with_preamble(spec, s));
}

std::string dospert_prompt_text(const QuestionnaireItem& item, Dimension dimension) {
    const std::string head =
        dimension == Dimension::RiskTaking
            ? "On a scale of 1 (extremely unlikely) to 7 (extremely likely), how likely are you to engage in the "
              "following activity?"
            : "On a scale of 1 (not at all risky) to 7 (extremely risky), how risky do you perceive the following "
              "activity to be?";
    return head + "\nAnswer with a single number between 1 and 7.\nQuestion: " + item.text + "\nAnswer:";
}

PromptPayload build_dospert_prompt(const QuestionnaireItem& item, Dimension dimension, const PromptSpec& spec) {
    PromptSpec plain = spec;
    plain.tone.reset();
    return wrap(plain, dospert_prompt_text(item, dimension));
}

std::size_t synthetic_answer(const ChoiceModelSpec& spec, const ChoiceQuestion& question, RandomStream& rng) {
    if (question.option_count() == 2) return sample_label(choice_probability(spec, question), rng) == 1 ? 0 : 1;
    return sample_index(choice_probabilities(spec, question), rng.uniform());
}

// ---- HTTP ----------------------------------------------------------------------

struct HttpChatTransport::Impl {
    EndpointConfig config;
    std::mutex mutex;
    std::condition_variable cv;
    int in_flight = 0;
};

HttpChatTransport::HttpChatTransport(EndpointConfig config) : impl_(std::make_unique<Impl>()) {
    impl_->config = std::move(config);
    if (impl_->config.base_url.empty()) throw std::invalid_argument("endpoint base_url required");
}

HttpChatTransport::~HttpChatTransport() = default;

nlohmann::json HttpChatTransport::request_body(const PromptPayload& payload, const GenerationParams& params,
                                               const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : payload.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", model},
            {"messages", messages},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"max_tokens", params.max_new_tokens}};
}

std::optional<std::string> HttpChatTransport::complete(const PromptPayload& payload, const GenerationParams& params) {
    auto& cfg = impl_->config;
    {
        std::unique_lock lock(impl_->mutex);
        impl_->cv.wait(lock, [&] { return impl_->in_flight < std::max(1, cfg.max_concurrency); });
        ++impl_->in_flight;
    }
    std::optional<std::string> reply;
    try {
        httplib::Client client(cfg.base_url);
        const auto secs = static_cast<time_t>(cfg.timeout_seconds);
        const auto usecs = static_cast<time_t>((cfg.timeout_seconds - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (const char* token = std::getenv(cfg.token_env.c_str()); token != nullptr && *token != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        const auto body = request_body(payload, params, cfg.model).dump();
        if (auto res = client.Post(cfg.path, headers, body, "application/json"); res && res->status == 200) {
            const auto j = nlohmann::json::parse(res->body, nullptr, false);
            if (!j.is_discarded() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
                const auto& msg = j["choices"][0]["message"]["content"];
                if (msg.is_string()) reply = msg.get<std::string>();
            }
        }
    } catch (const std::exception&) {
        reply.reset();
    }
    {
        std::lock_guard lock(impl_->mutex);
        --impl_->in_flight;
    }
    impl_->cv.notify_one();
    return reply;
}

QueryResult external_query(ChatTransport& transport, const PromptPayload& payload, const GenerationParams& params,
                           const Extractor& extract, int max_attempts, double backoff_seconds) {
    QueryResult r;
    double delay = backoff_seconds;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        r.attempts = attempt;
        std::optional<std::string> reply;
        try {
            reply = transport.complete(payload, params);
        } catch (const std::exception&) {
            reply.reset();
        }
        if (!reply) {
            if (delay > 0.0 && attempt < max_attempts) {
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
                delay *= 2.0;
            }
            continue;
        }
        r.raw_text = *reply;
        if (auto v = extract(*reply)) {
            r.value = v;
            return r;
        }
    }
    return r;
}

Extractor choice_extractor(std::string allowed) {
    return [allowed = std::move(allowed)](std::string_view text) -> std::optional<int> {
        if (auto c = extract_choice_letter(text, allowed)) return static_cast<int>(*c);
        return std::nullopt;
    };
}

Extractor likert_extractor() {
    return [](std::string_view text) { return extract_likert(text); };
}

// ---- agents --------------------------------------------------------------------

SyntheticAgent::SyntheticAgent(ChoiceModelSpec spec, double questionnaire_wealth)
    : spec_(std::move(spec)), wealth_(questionnaire_wealth) {
    if (auto v = spec_.violations(); !v.empty()) throw std::invalid_argument("invalid synthetic agent: " + v.front());
}

std::string SyntheticAgent::id() const { return "synthetic:" + std::string(family_name(spec_.utility.family)); }

AgentAnswer SyntheticAgent::answer_choice(const ChoiceQuestion& question, const PromptSpec&,
                                          std::span<const IclExample>, RandomStream& rng) {
    const std::size_t idx = synthetic_answer(spec_, question, rng);
    return {static_cast<int>(idx), std::string("Answer: ") + question.labels[idx], 1};
}

AgentAnswer SyntheticAgent::answer_item(const QuestionnaireItem& item, const PromptSpec&, RandomStream& rng) {
    std::vector<double> u;
    for (const auto& c : item.choices) {
        if (!c.lottery) throw std::invalid_argument(item.id + ": choice without a lottery");
        try {
            u.push_back(expected_utility(spec_.utility, shifted(*c.lottery, wealth_), spec_.weighting));
        } catch (const DomainError& e) {
            // Outside the utility's domain (e.g. a $0 outcome under CRRA): an invalid answer.
            return {std::nullopt, std::string("invalid: ") + e.what(), 1};
        }
    }
    const std::size_t idx = sample_index(choice_law(u, spec_.beta_sensitivity), rng.uniform());
    const char letter = item.choices[idx].letter;
    return {static_cast<int>(letter), std::string(1, letter), 1};
}

double SyntheticAgent::gamble_preference() const {
    const double ug = expected_utility(spec_.utility, Lottery({{1500.0 + wealth_, 0.5}, {500.0 + wealth_, 0.5}}),
                                       spec_.weighting);
    const double us = expected_utility(spec_.utility, Lottery({{1000.0 + wealth_, 1.0}}), spec_.weighting);
    return choice_law({ug, us}, spec_.beta_sensitivity)[0];
}

AgentAnswer SyntheticAgent::answer_likert(const QuestionnaireItem&, Dimension dimension, const PromptSpec&,
                                          RandomStream& rng) {
    const double p = gamble_preference();
    const double q = dimension == Dimension::RiskTaking ? p : 1.0 - p;
    int value = 1;
    for (int i = 0; i < 6; ++i) value += rng.uniform() < q ? 1 : 0;
    return {value, std::to_string(value), 1};
}

ExternalAgent::ExternalAgent(std::shared_ptr<ChatTransport> transport, AgentConfig config)
    : transport_(std::move(transport)), config_(std::move(config)) {
    if (!transport_) throw std::invalid_argument("external agent needs a transport");
}

std::string ExternalAgent::id() const {
    return config_.endpoint.model.empty() ? config_.endpoint.base_url : config_.endpoint.model;
}

AgentAnswer ExternalAgent::answer_choice(const ChoiceQuestion& question, const PromptSpec& spec,
                                         std::span<const IclExample> icl_pool, RandomStream&) {
    std::string letters;
    for (std::size_t idx : question.presentation_order()) letters += question.labels[idx];
    const auto r = external_query(*transport_, build_prompt(question, spec, icl_pool), config_.generation,
                                  choice_extractor(letters), config_.max_retries, config_.endpoint.backoff_seconds);
    AgentAnswer a{std::nullopt, r.raw_text, r.attempts};
    if (r.value) a.value = static_cast<int>(question.option_for_label(static_cast<char>(*r.value)));
    return a;
}

AgentAnswer ExternalAgent::answer_item(const QuestionnaireItem& item, const PromptSpec& spec, RandomStream&) {
    const auto r = external_query(*transport_, build_item_prompt(item, spec), config_.generation,
                                  choice_extractor(item.letters()), config_.max_retries,
                                  config_.endpoint.backoff_seconds);
    return {r.value, r.raw_text, r.attempts};
}

AgentAnswer ExternalAgent::answer_likert(const QuestionnaireItem& item, Dimension dimension, const PromptSpec& spec,
                                         RandomStream&) {
    const auto r = external_query(*transport_, build_dospert_prompt(item, dimension, spec), config_.generation,
                                  likert_extractor(), config_.dospert_max_retries, config_.endpoint.backoff_seconds);
    return {r.value, r.raw_text, r.attempts};
}

std::unique_ptr<Agent> make_agent(const AgentConfig& config) {
    if (auto v = config.violations(); !v.empty()) throw std::invalid_argument("invalid agent config: " + v.front());
    if (config.kind == AgentKind::Synthetic) {
        return std::make_unique<SyntheticAgent>(config.synthetic, config.questionnaire_wealth);
    }
    return std::make_unique<ExternalAgent>(std::make_shared<HttpChatTransport>(config.endpoint), config);
}

// ---- sessions ------------------------------------------------------------------

ChoiceSession run_choice_session(Agent& agent, std::span<const ChoiceQuestion> questions, const PromptSpec& spec,
                                 std::span<const IclExample> icl_pool, std::uint64_t seed) {
    std::vector<std::optional<std::size_t>> picks(questions.size());
    const RandomStream root(seed, 0xC40C);
    std::size_t workers = 1;
    if (auto* ext = dynamic_cast<ExternalAgent*>(&agent)) workers = static_cast<std::size_t>(ext->max_concurrency());
    parallel_for(
        questions.size(),
        [&](std::size_t i) {
            RandomStream rng = root.split(i);
            const auto a = agent.answer_choice(questions[i], spec, icl_pool, rng);
            if (a.value) picks[i] = static_cast<std::size_t>(*a.value);
        },
        workers);
    ChoiceSession s;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        if (picks[i]) {
            s.records.push_back(make_record(questions[i], *picks[i]));
        } else {
            s.invalid_question_ids.push_back(questions[i].id);
        }
    }
    return s;
}

std::vector<SurveyResponse> run_gl_session(Agent& agent, std::span<const QuestionnaireItem> items,
                                           const PromptSpec& spec, int repeats, std::uint64_t seed,
                                           std::span<const SurveyResponse> resume) {
    if (items.empty()) throw std::invalid_argument("no questionnaire items");
    if (repeats < 1) throw std::invalid_argument("repeats must be positive");
    std::map<std::string, const QuestionnaireItem*> by_id;
    std::vector<RowKey> keys;
    for (const auto& item : items) {
        by_id[item.id] = &item;
        for (int r = 0; r < repeats; ++r) keys.push_back({item.id, std::nullopt, r, spec.tone, spec.variant});
    }
    return run_rows(agent, keys, seed, resume, [&](const RowKey& key, RandomStream& rng) {
        const auto& item = *by_id.at(key.item_id);
        const auto a = agent.answer_item(item, spec, rng);
        SurveyResponse row;
        row.raw_text = a.raw_text;
        row.attempts = a.attempts;
        if (a.value) {
            if (const ItemChoice* c = item.choice(static_cast<char>(*a.value))) {
                row.letter = c->letter;
                row.extracted = c->score;
            }
        }
        return row;
    });
}

std::vector<SurveyResponse> run_dospert_session(Agent& agent, std::span<const QuestionnaireItem> items,
                                                const PromptSpec& spec, int repeats, std::uint64_t seed,
                                                std::span<const SurveyResponse> resume) {
    if (items.empty()) throw std::invalid_argument("no questionnaire items");
    if (repeats < 1) throw std::invalid_argument("repeats must be positive");
    std::map<std::string, const QuestionnaireItem*> by_id;
    std::vector<RowKey> keys;
    for (const auto& item : items) {
        by_id[item.id] = &item;
        for (auto dim : kAllDimensions) {
            for (int r = 0; r < repeats; ++r) keys.push_back({item.id, dim, r, std::nullopt, spec.variant});
        }
    }
    return run_rows(agent, keys, seed, resume, [&](const RowKey& key, RandomStream& rng) {
        const auto a = agent.answer_likert(*by_id.at(key.item_id), *key.dimension, spec, rng);
        SurveyResponse row;
        row.raw_text = a.raw_text;
        row.attempts = a.attempts;
        if (a.value && *a.value >= 1 && *a.value <= 7) row.extracted = *a.value;
        return row;
    });
}

}  // namespace riskpref
