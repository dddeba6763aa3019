#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskpref/lottery_gen.hpp"
#include "riskpref/random.hpp"
#include "riskpref/utility.hpp"

namespace riskpref {

/// Random-utility choice law: P(option i) is a logistic (two options) or
/// softmax (four options) function of beta_sensitivity * U. An infinite
/// beta_sensitivity is the deterministic argmax agent.
struct ChoiceModelSpec {
    UtilityModel utility;
    WeightingScheme weighting;
    double beta_sensitivity = 1.0;

    [[nodiscard]] bool is_argmax() const { return std::isinf(beta_sensitivity); }
    [[nodiscard]] std::vector<std::string> violations() const;
};

inline constexpr double kArgmaxBeta = std::numeric_limits<double>::infinity();

struct ChoiceRecord {
    std::string question_id;
    std::size_t chosen_index = 0;
    std::optional<int> label_y;  // two-option questions only; 1 = riskier option chosen
};

/// Numerically stable logistic function; saturates to exactly 0 or 1 once
/// |z| exceeds 700.
double logistic(double z);

std::vector<double> option_utilities(const ChoiceModelSpec& spec, const ChoiceQuestion& question);

/// Probability of choosing option 0 of a two-option question.
double choice_probability(const ChoiceModelSpec& spec, const ChoiceQuestion& question);

/// Choice distribution over every option (logistic for two, softmax otherwise).
std::vector<double> choice_probabilities(const ChoiceModelSpec& spec, const ChoiceQuestion& question);

int sample_label(double prob, RandomStream& rng);

/// Deterministic prediction: for two options the option whose choice
/// probability exceeds 0.5 (ties go to the lower-variance option, then to
/// option 0); for four options the expected-utility argmax (ties to the
/// lowest index).
std::size_t predict(const ChoiceModelSpec& spec, const ChoiceQuestion& question);

/// Fraction of positions where the two index lists agree.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

/// Option with strictly higher variance; ties resolve to option 0.
std::size_t risky_option_index(const ChoiceQuestion& question);

ChoiceRecord make_record(const ChoiceQuestion& question, std::size_t chosen_index);

nlohmann::json record_to_json(const ChoiceRecord& record);
ChoiceRecord record_from_json(const nlohmann::json& j);
void write_records_jsonl(const std::string& path, const std::vector<ChoiceRecord>& records);
std::vector<ChoiceRecord> read_records_jsonl(const std::string& path);

/// Labels sampled from the choice law of `spec`, one per question.
std::vector<std::size_t> sample_choices(const ChoiceModelSpec& spec, std::span<const ChoiceQuestion> questions,
                                        RandomStream& rng);

/// Agreement between argmax predictions of `spec` and labels sampled from
/// the same law.
double oracle_accuracy(const ChoiceModelSpec& spec, std::span<const ChoiceQuestion> questions, RandomStream& rng);

struct CalibrationResult {
    double beta = 0.0;
    double achieved_accuracy = 0.0;
    double target_accuracy = 0.0;
    /// Evaluated (beta, simulated accuracy) pairs, coarse grid then refinement.
    std::vector<std::pair<double, double>> grid;
};

/// Grid search over the inverse temperature so the simulated oracle
/// accuracy on `questions` is closest to `target_accuracy`. Labels use
/// common random numbers across grid points so the search is not chasing
/// sampling noise.
CalibrationResult calibrate_beta(const UtilityModel& utility, const WeightingScheme& weighting,
                                 std::span<const ChoiceQuestion> questions, double target_accuracy,
                                 std::uint64_t seed);

}  // namespace riskpref
