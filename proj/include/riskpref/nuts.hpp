#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "riskpref/random.hpp"

namespace riskpref {

/// Differentiable log density on an unconstrained space.
class LogDensity {
public:
    virtual ~LogDensity() = default;
    [[nodiscard]] virtual std::size_t dim() const = 0;
    /// Returns log p(q) (or -inf) and writes the gradient into `grad`.
    virtual double log_density_grad(std::span<const double> q, std::span<double> grad) const = 0;
};

enum class MetricKind { Diagonal, Dense };

struct NutsConfig {
    int draws = 3000;
    int tune = 1500;
    double target_accept = 0.97;
    int max_tree_depth = 10;
    MetricKind metric = MetricKind::Dense;
    double max_energy_error = 1000.0;
};

struct NutsChain {
    std::vector<Eigen::VectorXd> draws;  // post-warmup positions
    int divergences = 0;                 // post-warmup only
    int warmup_divergences = 0;
    double step_size = 0.0;
    double mean_accept_stat = 0.0;
    double mean_tree_depth = 0.0;
    Eigen::MatrixXd inverse_metric;
};

/// No-U-Turn sampler with multinomial trajectory sampling, dual-averaging
/// step-size adaptation and windowed metric adaptation during warmup.
class NutsSampler {
public:
    NutsSampler(const LogDensity& target, NutsConfig config);

    NutsChain run(const Eigen::VectorXd& init, RandomStream rng) const;

private:
    const LogDensity& target_;
    NutsConfig config_;
};

}  // namespace riskpref
