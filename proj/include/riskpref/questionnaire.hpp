#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskpref/utility.hpp"

namespace riskpref {

enum class Domain { Ethical, Financial, HealthSafety, Recreational, Social };
enum class Dimension { RiskTaking, RiskPerception };
enum class PromptTone { Direct, Cautious, Aggressive };

inline constexpr Domain kAllDomains[] = {Domain::Ethical, Domain::Financial, Domain::HealthSafety,
                                         Domain::Recreational, Domain::Social};
inline constexpr Dimension kAllDimensions[] = {Dimension::RiskTaking, Dimension::RiskPerception};

std::string_view domain_name(Domain d);
Domain parse_domain(std::string_view name);
std::string_view dimension_name(Dimension d);
Dimension parse_dimension(std::string_view name);
std::string_view tone_name(PromptTone t);
PromptTone parse_tone(std::string_view name);

struct ItemChoice {
    char letter = 'a';
    std::string text;
    int score = 1;
    /// Monetary reading of the choice, used by synthetic agents.
    std::optional<Lottery> lottery;
};

/// A G&L item has 2-4 scored choices; a DOSPERT item has none (Likert 1-7)
/// and carries a domain.
struct QuestionnaireItem {
    std::string id;
    std::string text;
    std::vector<ItemChoice> choices;
    std::optional<Domain> domain;
    bool placeholder = false;

    [[nodiscard]] const ItemChoice* choice(char letter) const;  // case-insensitive; nullptr if absent
    [[nodiscard]] int max_score() const;
    [[nodiscard]] int min_score() const;
    [[nodiscard]] std::string letters() const;
};

QuestionnaireItem item_from_json(const nlohmann::json& j);
nlohmann::json item_to_json(const QuestionnaireItem& item);
/// Loads a JSON array of items and checks the G&L or DOSPERT invariants.
std::vector<QuestionnaireItem> load_gl_items(const std::string& path);
std::vector<QuestionnaireItem> load_dospert_items(const std::string& path);
std::vector<std::string> gl_item_violations(const QuestionnaireItem& item);

struct SurveyResponse {
    std::string model_id;
    std::string item_id;
    std::optional<Dimension> dimension;  // DOSPERT only
    int run_index = 0;
    std::string raw_text;
    std::optional<char> letter;    // G&L: extracted choice letter
    std::optional<int> extracted;  // G&L: choice score; DOSPERT: Likert value
    std::optional<PromptTone> tone;
    int variant = 1;
    int attempts = 1;
};

enum class GLCategory { Low, BelowAverage, Average, AboveAverage, High };

std::string_view category_name(GLCategory c);
/// >=33 High, 29-32 Above-average, 23-28 Average, 19-22 Below-average, <=18 Low.
GLCategory classify_gl(int total);

struct GLScore {
    int total = 0;
    GLCategory category = GLCategory::Low;
};

/// Sums the choice scores of one answer per item; throws std::invalid_argument
/// for a missing item or a letter the item does not offer.
GLScore score_grable_lytton(std::span<const QuestionnaireItem> items, const std::map<std::string, char>& answers);

struct GLRunSummary {
    std::optional<PromptTone> tone;
    std::vector<int> totals;  // valid runs only
    int dropped_runs = 0;     // runs with an invalid or missing item
    double mean = 0.0;
    double sd = 0.0;
    GLCategory category = GLCategory::Low;  // of the rounded mean
};

/// Scores each (tone, run) separately and reports mean and sd of the totals
/// over complete runs.
std::vector<GLRunSummary> aggregate_gl_runs(std::span<const QuestionnaireItem> items,
                                            std::span<const SurveyResponse> responses);

struct ItemMean {
    double mean = 0.0;
    int valid = 0;
};

struct DospertScores {
    /// Keyed by (item id, dimension); items without a valid run are absent.
    std::map<std::pair<std::string, Dimension>, ItemMean> items;
    /// Mean of item means per (domain, dimension); absent when no item has data.
    std::map<std::pair<Domain, Dimension>, double> domains;
};

DospertScores score_dospert(std::span<const QuestionnaireItem> items, std::span<const SurveyResponse> responses);

/// Likert value 1-7 from free text, or nullopt.
std::optional<int> extract_likert(std::string_view raw_text);

/// Choice letter from free text, matched case-insensitively and returned in
/// the case used by `allowed`; nullopt when no allowed letter is found.
std::optional<char> extract_choice_letter(std::string_view raw_text, std::string_view allowed);

void write_response_log_csv(const std::string& path, const std::vector<SurveyResponse>& responses);
std::vector<SurveyResponse> read_response_log_csv(const std::string& path);
void write_radar_csv(const std::string& path, const DospertScores& scores);

}  // namespace riskpref
