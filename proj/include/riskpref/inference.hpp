#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "riskpref/choice_model.hpp"
#include "riskpref/lottery_gen.hpp"
#include "riskpref/nuts.hpp"
#include "riskpref/utility.hpp"

namespace riskpref {

enum class PriorKind { HalfNormal, Normal, Beta, TruncNormal };

/// Univariate prior. HalfNormal uses `b` as sigma; Normal and TruncNormal use
/// (a, b) = (mu, sigma); Beta uses (a, b) as shape parameters. `lo`/`hi`
/// bound the support (a plain Normal may still be truncated).
struct Prior {
    PriorKind kind = PriorKind::Normal;
    double a = 0.0;
    double b = 1.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    static Prior half_normal(double sigma);
    static Prior normal(double mu, double sigma);
    static Prior beta(double a, double b);
    static Prior truncated_normal(double mu, double sigma, double lo, double hi);

    /// Normalised log density; -inf outside the support.
    [[nodiscard]] double log_density(double x) const;
    [[nodiscard]] bool in_support(double x) const;
    [[nodiscard]] std::vector<std::string> violations() const;
    [[nodiscard]] std::string describe() const;
};

struct PriorOptions {
    bool wide_crra_prior = false;  // Normal(0, 3) on gamma so risk-seeking agents are reachable
    double cara_scale = 250.0;
    double prospect_r0 = 0.0;
    double epsilon = 1e-6;  // lower truncation for changepoints and concave curvatures
};

/// Priors for every free parameter of one model, keyed by parameter name,
/// plus constants held fixed during fitting.
struct PriorSpec {
    std::map<std::string, Prior> priors;
    std::map<std::string, double> fixed;
    double max_reward_M = 0.0;

    [[nodiscard]] std::vector<std::string> violations() const;
};

/// A utility family, an optional probability-weighting scheme and their priors.
struct FitModel {
    Family family = Family::CRRA;
    WeightingKind weighting = WeightingKind::None;
    PriorSpec priors;
};

/// Free parameters in sampling order: family parameters (Piecewise-FS uses
/// `delta` = c2 - c1 instead of c2; CARA scale and Prospect r0 are fixed),
/// then weighting parameters, then `beta_sensitivity`.
std::vector<std::string> free_param_names(Family family, WeightingKind weighting);

PriorSpec default_priors(Family family, WeightingKind weighting, double max_reward_M,
                         const PriorOptions& options = {});

FitModel make_fit_model(Family family, WeightingKind weighting, double max_reward_M,
                        const PriorOptions& options = {});

/// Observed choices: `chosen[i]` is the option index picked on `questions[i]`.
struct FitData {
    std::vector<ChoiceQuestion> questions;
    std::vector<std::size_t> chosen;

    [[nodiscard]] std::size_t size() const { return questions.size(); }
    [[nodiscard]] double max_reward() const;
};

/// Sum of log choice probabilities under the model; `params` are the free
/// parameters (constrained scale) in free_param_names() order.
double log_likelihood(const FitModel& model, std::span<const double> params, const FitData& data);

/// log_likelihood plus the log prior density; -inf outside the prior support.
double log_posterior(const FitModel& model, std::span<const double> params, const FitData& data);

/// Canonical utility model and weighting scheme for a free-parameter vector.
ChoiceModelSpec choice_spec_from_params(const FitModel& model, std::span<const double> params);

/// Posterior density pulled back to an unconstrained space, with gradients
/// from forward-mode differentiation.
class PosteriorDensity final : public LogDensity {
public:
    PosteriorDensity(FitModel model, const FitData& data);

    [[nodiscard]] std::size_t dim() const override { return names_.size(); }
    double log_density_grad(std::span<const double> q, std::span<double> grad) const override;
    [[nodiscard]] double log_density(std::span<const double> q) const;

    [[nodiscard]] std::vector<double> to_constrained(std::span<const double> q) const;
    [[nodiscard]] std::vector<double> to_unconstrained(std::span<const double> params) const;
    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] const FitModel& model() const { return model_; }

    /// Log prior plus log likelihood at constrained parameters (no Jacobian).
    [[nodiscard]] double log_joint(std::span<const double> params) const;
    [[nodiscard]] double log_lik(std::span<const double> params) const;

private:
    enum class SlotKind { Free, Fixed, C1PlusDelta };
    struct Slot {
        SlotKind kind = SlotKind::Free;
        std::size_t index = 0;  // free index (or c1's index for C1PlusDelta)
        std::size_t other = 0;  // delta's index for C1PlusDelta
        double value = 0.0;     // Fixed slots
    };

    template <class T>
    T evaluate(std::span<const T> q) const;
    template <std::size_t N>
    double gradient(std::span<const double> q, std::span<double> grad) const;
    template <class T>
    T prior_term(std::size_t k, const T& x) const;
    template <class T>
    T likelihood(std::span<const T> x) const;

    FitModel model_;
    std::vector<std::string> names_;
    std::vector<Prior> priors_;
    std::vector<double> prior_log_norm_;
    std::vector<Slot> slots_;
    std::size_t beta_index_ = 0;
    std::size_t weighting_index_ = 0;
    std::vector<Outcome> outcomes_;
    std::vector<double> rewards_;             // distinct rewards
    std::vector<double> probs_;               // distinct probabilities
    std::vector<std::uint32_t> reward_of_;    // per outcome, index into rewards_
    std::vector<std::uint32_t> prob_of_;      // per outcome, index into probs_
    std::vector<std::uint32_t> option_begin_;    // outcome offset per option, plus end sentinel
    std::vector<std::uint32_t> question_begin_;  // option offset per question, plus end sentinel
    std::vector<std::uint32_t> chosen_;
};

struct SamplerConfig {
    int draws = 3000;
    int tune = 1500;
    int chains = 6;
    double target_accept = 0.97;
    std::uint64_t seed = 0;
    double rhat_fail_threshold = 1.05;
    int max_tree_depth = 10;
    MetricKind metric = MetricKind::Dense;
    int max_init_attempts = 100;

    [[nodiscard]] std::vector<std::string> violations() const;
};

enum class FitStatus { Ok, Failed };

/// Post-warmup draws on the constrained scale, one draws x params matrix per chain.
struct McmcResult {
    std::vector<std::string> param_names;
    std::vector<Eigen::MatrixXd> chains;
    std::vector<int> divergences;  // per chain
    FitStatus status = FitStatus::Ok;
    std::string message;
};

McmcResult run_mcmc(const FitModel& model, const FitData& data, const SamplerConfig& config);

struct Diagnostics {
    double max_rhat = 1.0;
    int divergences = 0;
    double min_ess = 0.0;
    std::vector<double> rhat;  // per parameter
    std::vector<double> ess;   // per parameter (bulk)
};

/// Rank-normalised split R-hat: the larger of the bulk and folded-tail values.
/// A draw set with zero within-chain variance reports 1.0.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Bulk effective sample size from rank-normalised split chains.
double ess_bulk(const std::vector<std::vector<double>>& chains);

/// Throws std::invalid_argument with fewer than two chains.
Diagnostics diagnostics(const McmcResult& result);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Shortest interval holding `prob` of the draws.
Interval hdi(std::vector<double> draws, double prob = 0.94);

struct ParamSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double hdi_3 = 0.0;
    double hdi_97 = 0.0;
};

std::vector<ParamSummary> summarize(const McmcResult& result);

struct FitResult {
    Family family = Family::CRRA;
    WeightingKind weighting = WeightingKind::None;
    FitStatus status = FitStatus::Ok;
    std::vector<ParamSummary> params;
    Diagnostics diagnostics;
    std::optional<double> held_out_accuracy;
    std::optional<double> train_accuracy;
    std::string message;

    /// Posterior-mean point estimate as a choice model.
    [[nodiscard]] ChoiceModelSpec point_estimate(const FitModel& model) const;
};

/// Fraction of questions where the model's prediction matches the observed choice.
double prediction_accuracy(const ChoiceModelSpec& spec, const FitData& data);

FitResult fit_model(const FitModel& model, const FitData& train, const FitData& test, const SamplerConfig& config);

struct FamilyRequest {
    Family family = Family::CRRA;
    WeightingKind weighting = WeightingKind::None;
};

/// Fits every requested model and returns them sorted by held-out accuracy
/// (descending); Failed fits follow in request order.
std::vector<FitResult> fit_all_families(const FitData& train, const FitData& test,
                                        std::span<const FamilyRequest> families, const PriorOptions& priors,
                                        const SamplerConfig& config);

std::string_view status_name(FitStatus status);
nlohmann::json fit_result_to_json(const FitResult& result);
void write_fit_report(const std::string& path, const std::vector<FitResult>& results);
void write_leaderboard_csv(const std::string& path, const std::vector<FitResult>& results);

/// Runs fn(i) for i in [0, n) on up to `max_workers` threads (0 = hardware concurrency).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t max_workers = 0);

}  // namespace riskpref
