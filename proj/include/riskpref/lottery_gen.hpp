#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskpref/random.hpp"
#include "riskpref/utility.hpp"

namespace riskpref {

struct GeneratorConfig {
    double ev_lo = 100.0;
    double ev_hi = 1000.0;
    double p_lo = 0.2;
    double p_hi = 0.8;
    double low_fraction = 0.8;  // small reward drawn from (0, low_fraction * EV)
    double ev_diff_min = 0.05;
    double var_diff_min = 0.10;
    std::uint64_t seed = 0;

    [[nodiscard]] std::vector<std::string> violations() const;
};

enum class QuestionMode { SameEV, DiffEV, FourOption };

std::string_view mode_name(QuestionMode mode);
QuestionMode parse_mode(std::string_view name);

struct Moments {
    double ev = 0.0;
    double variance = 0.0;
};

/// A multiple-choice lottery question. `options` keep generation order;
/// `labels[i]` is the letter under which option i is presented.
struct ChoiceQuestion {
    std::string id;
    QuestionMode mode = QuestionMode::DiffEV;
    std::vector<Lottery> options;
    std::vector<char> labels;
    std::vector<Moments> moments;
    std::string text;

    [[nodiscard]] std::size_t option_count() const { return options.size(); }
    /// Index of the option presented under `label`; throws if absent.
    [[nodiscard]] std::size_t option_for_label(char label) const;
    /// Options in presentation order (A, B, ...).
    [[nodiscard]] std::vector<std::size_t> presentation_order() const;
};

/// Builds a question from explicit options and labels, filling in moments and text.
ChoiceQuestion make_question(std::string id, QuestionMode mode, std::vector<Lottery> options,
                             std::vector<char> labels);

Moments lottery_moments(const Lottery& lottery);

/// Solves EV = p*r1 + (1-p)*r2 for the large reward. Returns nullopt when
/// r1 < 0, which tells the sampler to redraw.
std::optional<Lottery> lottery_from_draws(double ev, double p, double r2);

/// Two-outcome lottery with an EV drawn from ev_range, whole-dollar rewards
/// and whole-percent probabilities. `fixed_ev` pins the (integer) EV for
/// same-EV pairs.
Lottery sample_lottery(const GeneratorConfig& config, RandomStream& rng,
                       std::optional<double> fixed_ev = std::nullopt);

/// Acceptance predicate for different-EV pairs: relative EV gap or relative
/// variance gap, both measured against the smaller value.
bool passes_difference_filter(const Moments& a, const Moments& b, const GeneratorConfig& config);

struct QuestionDraw {
    ChoiceQuestion question;
    int rejected_pairs = 0;
};

QuestionDraw draw_question(const GeneratorConfig& config, QuestionMode mode, RandomStream& rng,
                           std::string id);
ChoiceQuestion build_question(const GeneratorConfig& config, QuestionMode mode, RandomStream& rng,
                              std::string id);

/// `n` questions; question i draws from stream `i` of the config seed so
/// shards generated in parallel match a sequential run.
std::vector<ChoiceQuestion> generate_dataset(const GeneratorConfig& config, QuestionMode mode,
                                             std::size_t n, std::size_t first_index = 0);

std::string render_lottery(const Lottery& lottery);
std::string render_question(const ChoiceQuestion& question);

nlohmann::json question_to_json(const ChoiceQuestion& question);
ChoiceQuestion question_from_json(const nlohmann::json& j);

void write_questions_jsonl(const std::string& path, const std::vector<ChoiceQuestion>& questions);
std::vector<ChoiceQuestion> read_questions_jsonl(const std::string& path);
void write_questions_csv(const std::string& path, const std::vector<ChoiceQuestion>& questions);

}  // namespace riskpref
