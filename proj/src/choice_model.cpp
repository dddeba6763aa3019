#include "riskpref/choice_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace riskpref {

namespace {

// Index of the option sampled by inverse CDF of `probs` at uniform draw u.
std::size_t inverse_cdf(const std::vector<double>& probs, double u) {
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return probs.size() - 1;
}

std::vector<double> softmax(std::span<const double> utilities, double beta) {
    std::vector<double> probs(utilities.size(), 0.0);
    const double top = *std::max_element(utilities.begin(), utilities.end());
    if (std::isinf(beta)) {
        std::size_t ties = 0;
        for (double u : utilities) ties += (u == top);
        for (std::size_t i = 0; i < utilities.size(); ++i) {
            probs[i] = utilities[i] == top ? 1.0 / static_cast<double>(ties) : 0.0;
        }
        return probs;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < utilities.size(); ++i) {
        probs[i] = std::exp(beta * (utilities[i] - top));
        total += probs[i];
    }
    for (auto& p : probs) p /= total;
    return probs;
}

double two_option_probability(double u0, double u1, double beta) {
    const double diff = u0 - u1;
    if (diff == 0.0 || beta == 0.0) return 0.5;
    return logistic(beta * diff);
}

std::size_t argmax_lowest(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::size_t predict_from_utilities(const ChoiceQuestion& q, std::span<const double> u, double beta) {
    if (q.option_count() == 2) {
        const double p0 = two_option_probability(u[0], u[1], beta);
        if (p0 > 0.5) return 0;
        if (p0 < 0.5) return 1;
        return q.moments[1].variance < q.moments[0].variance ? 1 : 0;
    }
    return argmax_lowest(u);
}

}  // namespace

std::vector<std::string> ChoiceModelSpec::violations() const {
    auto out = validate_params(utility).violations;
    for (auto& w : weighting.violations()) out.push_back(w);
    if (!(beta_sensitivity >= 0.0)) out.emplace_back("beta_sensitivity >= 0");
    return out;
}

double logistic(double z) {
    if (z > 700.0) return 1.0;
    if (z < -700.0) return 0.0;
    const double small = std::exp(-std::abs(z)) / (1.0 + std::exp(-std::abs(z)));
    return z >= 0.0 ? 1.0 - small : small;
}

std::vector<double> option_utilities(const ChoiceModelSpec& spec, const ChoiceQuestion& question) {
    std::vector<double> u;
    u.reserve(question.option_count());
    for (const auto& opt : question.options) u.push_back(expected_utility(spec.utility, opt, spec.weighting));
    return u;
}

double choice_probability(const ChoiceModelSpec& spec, const ChoiceQuestion& question) {
    if (question.option_count() != 2) throw std::invalid_argument("choice_probability needs two options");
    const auto u = option_utilities(spec, question);
    return two_option_probability(u[0], u[1], spec.beta_sensitivity);
}

std::vector<double> choice_probabilities(const ChoiceModelSpec& spec, const ChoiceQuestion& question) {
    const auto u = option_utilities(spec, question);
    if (u.size() == 2) {
        const double p0 = two_option_probability(u[0], u[1], spec.beta_sensitivity);
        return {p0, 1.0 - p0};
    }
    return softmax(u, spec.beta_sensitivity);
}

int sample_label(double prob, RandomStream& rng) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("label probability outside [0,1]");
    return rng.uniform() < prob ? 1 : 0;
}

std::size_t predict(const ChoiceModelSpec& spec, const ChoiceQuestion& question) {
    const auto u = option_utilities(spec, question);
    return predict_from_utilities(question, u, spec.beta_sensitivity);
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> labels) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::size_t risky_option_index(const ChoiceQuestion& question) {
    if (question.option_count() != 2) throw std::invalid_argument("risky option defined for two options");
    return question.moments[1].variance > question.moments[0].variance ? 1 : 0;
}

ChoiceRecord make_record(const ChoiceQuestion& question, std::size_t chosen_index) {
    if (chosen_index >= question.option_count()) throw std::invalid_argument("chosen index out of range");
    ChoiceRecord r{question.id, chosen_index, std::nullopt};
    if (question.option_count() == 2) r.label_y = chosen_index == risky_option_index(question) ? 1 : 0;
    return r;
}

nlohmann::json record_to_json(const ChoiceRecord& r) {
    nlohmann::json j{{"question_id", r.question_id}, {"chosen_index", r.chosen_index}};
    j["label_y"] = r.label_y ? nlohmann::json(*r.label_y) : nlohmann::json(nullptr);
    return j;
}

ChoiceRecord record_from_json(const nlohmann::json& j) {
    ChoiceRecord r;
    r.question_id = j.at("question_id").get<std::string>();
    r.chosen_index = j.at("chosen_index").get<std::size_t>();
    if (j.contains("label_y") && !j["label_y"].is_null()) r.label_y = j["label_y"].get<int>();
    return r;
}

void write_records_jsonl(const std::string& path, const std::vector<ChoiceRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<ChoiceRecord> read_records_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<ChoiceRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(record_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

std::vector<std::size_t> sample_choices(const ChoiceModelSpec& spec, std::span<const ChoiceQuestion> questions,
                                        RandomStream& rng) {
    std::vector<std::size_t> out;
    out.reserve(questions.size());
    for (const auto& q : questions) out.push_back(inverse_cdf(choice_probabilities(spec, q), rng.uniform()));
    return out;
}

double oracle_accuracy(const ChoiceModelSpec& spec, std::span<const ChoiceQuestion> questions, RandomStream& rng) {
    const auto labels = sample_choices(spec, questions, rng);
    std::vector<std::size_t> preds;
    preds.reserve(questions.size());
    for (const auto& q : questions) preds.push_back(predict(spec, q));
    return accuracy(preds, labels);
}

CalibrationResult calibrate_beta(const UtilityModel& utility, const WeightingScheme& weighting,
                                 std::span<const ChoiceQuestion> questions, double target_accuracy,
                                 std::uint64_t seed) {
    if (questions.empty()) throw std::invalid_argument("calibrate_beta: no questions");
    const ChoiceModelSpec probe{utility, weighting, 1.0};
    RandomStream rng(seed, 0xCA11B);

    std::vector<std::vector<double>> utils;
    std::vector<std::size_t> truth;
    std::vector<double> draws;
    std::vector<double> spreads;
    for (const auto& q : questions) {
        utils.push_back(option_utilities(probe, q));
        truth.push_back(predict_from_utilities(q, utils.back(), kArgmaxBeta));
        draws.push_back(rng.uniform());
        const auto [lo, hi] = std::minmax_element(utils.back().begin(), utils.back().end());
        if (*hi > *lo) spreads.push_back(*hi - *lo);
    }
    if (spreads.empty()) throw std::invalid_argument("calibrate_beta: all options tie in utility");
    std::nth_element(spreads.begin(), spreads.begin() + spreads.size() / 2, spreads.end());
    const double scale = 1.0 / spreads[spreads.size() / 2];

    CalibrationResult result;
    result.target_accuracy = target_accuracy;
    auto simulate = [&](double beta) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < questions.size(); ++i) {
            std::vector<double> probs;
            if (utils[i].size() == 2) {
                const double p0 = two_option_probability(utils[i][0], utils[i][1], beta);
                probs = {p0, 1.0 - p0};
            } else {
                probs = softmax(utils[i], beta);
            }
            hits += inverse_cdf(probs, draws[i]) == truth[i];
        }
        const double acc = static_cast<double>(hits) / static_cast<double>(questions.size());
        result.grid.emplace_back(beta, acc);
        return acc;
    };

    double best_exp = 0.0;
    double best_gap = INFINITY;
    auto consider = [&](double exponent) {
        const double acc = simulate(scale * std::pow(10.0, exponent));
        const double gap = std::abs(acc - target_accuracy);
        if (gap < best_gap) {
            best_gap = gap;
            best_exp = exponent;
            result.achieved_accuracy = acc;
        }
    };
    for (int k = -80; k <= 160; ++k) consider(0.05 * k);
    const double center = best_exp;
    for (int k = -50; k <= 50; ++k) consider(center + 0.001 * k);
    result.beta = scale * std::pow(10.0, best_exp);
    return result;
}

}  // namespace riskpref
