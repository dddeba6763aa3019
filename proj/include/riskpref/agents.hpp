#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskpref/choice_model.hpp"
#include "riskpref/lottery_gen.hpp"
#include "riskpref/questionnaire.hpp"
#include "riskpref/random.hpp"

namespace riskpref {

struct GenerationParams {
    double temperature = 0.7;
    double top_p = 0.9;
    int max_new_tokens = 50;
};

struct EndpointConfig {
    std::string base_url;  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string token_env = "RISKPREF_API_TOKEN";
    double timeout_seconds = 60.0;
    int max_concurrency = 4;
    double backoff_seconds = 1.0;  // first delay after a transport failure, doubled per failure
};

enum class AgentKind { Synthetic, External };

struct AgentConfig {
    AgentKind kind = AgentKind::Synthetic;
    ChoiceModelSpec synthetic;
    EndpointConfig endpoint;
    GenerationParams generation;
    int max_retries = 5;          // total attempts per question
    int dospert_max_retries = 3;  // total attempts per DOSPERT query
    std::uint64_t seed = 0;
    /// Added to every questionnaire reward before a synthetic agent evaluates it.
    double questionnaire_wealth = 0.0;

    [[nodiscard]] std::vector<std::string> violations() const;
};

struct PromptSpec {
    std::optional<PromptTone> tone;
    int variant = 1;  // 1-5
    int icl_examples = 0;
    bool chat_style = true;

    [[nodiscard]] std::vector<std::string> violations() const;
};

struct ChatMessage {
    std::string role;
    std::string content;
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// Chat style carries a system and a user message; plain style a single
/// user message holding the whole few-shot text.
struct PromptPayload {
    bool chat_style = true;
    std::vector<ChatMessage> messages;

    [[nodiscard]] const std::string& user_text() const { return messages.back().content; }
    friend bool operator==(const PromptPayload&, const PromptPayload&) = default;
};

struct IclExample {
    ChoiceQuestion question;
    char choice = 'A';
};

inline constexpr std::string_view kChatSystemMessage = "You are a helpful assistant that provides concise answers.";

/// The five shipped phrasings of a tone, in order.
std::span<const std::string_view> tone_variants(PromptTone tone);
std::string_view tone_preamble(PromptTone tone, int variant);

/// Letters "A", "A or B", "A, B, C or D" for the question's option count.
std::string letter_list(std::size_t option_count);

/// Uses the first `spec.icl_examples` entries of `icl_pool`; throws if the
/// pool is shorter.
PromptPayload build_prompt(const ChoiceQuestion& question, const PromptSpec& spec,
                           std::span<const IclExample> icl_pool = {});
PromptPayload build_item_prompt(const QuestionnaireItem& item, const PromptSpec& spec);
PromptPayload build_dospert_prompt(const QuestionnaireItem& item, Dimension dimension, const PromptSpec& spec);
std::string dospert_prompt_text(const QuestionnaireItem& item, Dimension dimension);

/// Option index sampled from the choice law of `spec`.
std::size_t synthetic_answer(const ChoiceModelSpec& spec, const ChoiceQuestion& question, RandomStream& rng);

/// Sends a prompt and returns the reply text, or nullopt on transport failure.
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual std::optional<std::string> complete(const PromptPayload& payload, const GenerationParams& params) = 0;
};

/// POSTs OpenAI-style chat-completion requests, at most
/// `max_concurrency` in flight across threads.
class HttpChatTransport final : public ChatTransport {
public:
    explicit HttpChatTransport(EndpointConfig config);
    ~HttpChatTransport() override;
    std::optional<std::string> complete(const PromptPayload& payload, const GenerationParams& params) override;

    static nlohmann::json request_body(const PromptPayload& payload, const GenerationParams& params,
                                       const std::string& model);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

using Extractor = std::function<std::optional<int>(std::string_view)>;

struct QueryResult {
    std::optional<int> value;  // extracted answer; nullopt = invalid
    std::string raw_text;      // last reply seen (empty if none arrived)
    int attempts = 0;
};

/// Up to `max_attempts` requests until `extract` succeeds. Transport failures
/// count as attempts and trigger exponential backoff; never throws for them.
QueryResult external_query(ChatTransport& transport, const PromptPayload& payload, const GenerationParams& params,
                           const Extractor& extract, int max_attempts, double backoff_seconds = 0.0);

Extractor choice_extractor(std::string allowed);
Extractor likert_extractor();

struct AgentAnswer {
    std::optional<int> value;  // option index, choice letter, or Likert value
    std::string raw_text;
    int attempts = 1;
};

class Agent {
public:
    virtual ~Agent() = default;
    [[nodiscard]] virtual std::string id() const = 0;
    [[nodiscard]] virtual bool is_external() const = 0;
    /// Value is the chosen option index.
    virtual AgentAnswer answer_choice(const ChoiceQuestion& question, const PromptSpec& spec,
                                      std::span<const IclExample> icl_pool, RandomStream& rng) = 0;
    /// Value is the chosen letter (as a char code).
    virtual AgentAnswer answer_item(const QuestionnaireItem& item, const PromptSpec& spec, RandomStream& rng) = 0;
    /// Value is the Likert rating.
    virtual AgentAnswer answer_likert(const QuestionnaireItem& item, Dimension dimension, const PromptSpec& spec,
                                      RandomStream& rng) = 0;
};

class SyntheticAgent final : public Agent {
public:
    explicit SyntheticAgent(ChoiceModelSpec spec, double questionnaire_wealth = 0.0);
    [[nodiscard]] std::string id() const override;
    [[nodiscard]] bool is_external() const override { return false; }
    AgentAnswer answer_choice(const ChoiceQuestion& question, const PromptSpec& spec,
                              std::span<const IclExample> icl_pool, RandomStream& rng) override;
    AgentAnswer answer_item(const QuestionnaireItem& item, const PromptSpec& spec, RandomStream& rng) override;
    AgentAnswer answer_likert(const QuestionnaireItem& item, Dimension dimension, const PromptSpec& spec,
                              RandomStream& rng) override;

    /// Probability of preferring a 50/50 gamble over $500 and $1,500 to a
    /// sure $1,000; drives the synthetic Likert answers.
    [[nodiscard]] double gamble_preference() const;

private:
    ChoiceModelSpec spec_;
    double wealth_;
};

class ExternalAgent final : public Agent {
public:
    ExternalAgent(std::shared_ptr<ChatTransport> transport, AgentConfig config);
    [[nodiscard]] std::string id() const override;
    [[nodiscard]] bool is_external() const override { return true; }
    AgentAnswer answer_choice(const ChoiceQuestion& question, const PromptSpec& spec,
                              std::span<const IclExample> icl_pool, RandomStream& rng) override;
    AgentAnswer answer_item(const QuestionnaireItem& item, const PromptSpec& spec, RandomStream& rng) override;
    AgentAnswer answer_likert(const QuestionnaireItem& item, Dimension dimension, const PromptSpec& spec,
                              RandomStream& rng) override;
    [[nodiscard]] int max_concurrency() const { return config_.endpoint.max_concurrency; }

private:
    std::shared_ptr<ChatTransport> transport_;
    AgentConfig config_;
};

std::unique_ptr<Agent> make_agent(const AgentConfig& config);

struct ChoiceSession {
    std::vector<ChoiceRecord> records;         // valid answers, in question order
    std::vector<std::string> invalid_question_ids;
};

ChoiceSession run_choice_session(Agent& agent, std::span<const ChoiceQuestion> questions, const PromptSpec& spec,
                                 std::span<const IclExample> icl_pool, std::uint64_t seed);

/// items x repeats rows. Rows already present in `resume` (same item, run,
/// tone and variant) are kept as they are.
std::vector<SurveyResponse> run_gl_session(Agent& agent, std::span<const QuestionnaireItem> items,
                                           const PromptSpec& spec, int repeats, std::uint64_t seed,
                                           std::span<const SurveyResponse> resume = {});

/// items x 2 dimensions x repeats rows, resumable like run_gl_session.
std::vector<SurveyResponse> run_dospert_session(Agent& agent, std::span<const QuestionnaireItem> items,
                                                const PromptSpec& spec, int repeats, std::uint64_t seed,
                                                std::span<const SurveyResponse> resume = {});

}  // namespace riskpref
