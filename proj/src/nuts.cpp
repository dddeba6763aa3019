#include "riskpref/nuts.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace riskpref {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhasePoint {
    Eigen::VectorXd q;
    Eigen::VectorXd p;
    Eigen::VectorXd grad;
    double logp = -kInf;
};

class Hamiltonian {
public:
    Hamiltonian(const LogDensity& target, std::size_t dim)
        : target_(target), inv_metric_(Eigen::MatrixXd::Identity(dim, dim)) {
        factor();
    }

    void set_inverse_metric(const Eigen::MatrixXd& m) {
        inv_metric_ = m;
        factor();
    }
    [[nodiscard]] const Eigen::MatrixXd& inverse_metric() const { return inv_metric_; }

    void update_potential(PhasePoint& z) const {
        z.grad.resize(z.q.size());
        z.logp = target_.log_density_grad(std::span<const double>(z.q.data(), z.q.size()),
                                          std::span<double>(z.grad.data(), z.grad.size()));
        if (!std::isfinite(z.logp)) {
            z.logp = -kInf;
            z.grad.setZero();
        }
    }

    [[nodiscard]] Eigen::VectorXd dtau_dp(const Eigen::VectorXd& p) const { return inv_metric_ * p; }

    [[nodiscard]] double hamiltonian(const PhasePoint& z) const {
        const double h = -z.logp + 0.5 * z.p.dot(inv_metric_ * z.p);
        return std::isnan(h) ? kInf : h;
    }

    void sample_momentum(PhasePoint& z, RandomStream& rng) const {
        Eigen::VectorXd n(z.q.size());
        for (Eigen::Index i = 0; i < n.size(); ++i) n[i] = rng.normal();
        // Minv = L L^T, so p = L^{-T} n has covariance Minv^{-1}.
        z.p = chol_upper_.triangularView<Eigen::Upper>().solve(n);
    }

    void leapfrog(PhasePoint& z, double eps) const {
        z.p += 0.5 * eps * z.grad;
        z.q += eps * (inv_metric_ * z.p);
        update_potential(z);
        z.p += 0.5 * eps * z.grad;
    }

private:
    void factor() {
        Eigen::LLT<Eigen::MatrixXd> llt(inv_metric_);
        if (llt.info() != Eigen::Success) throw std::runtime_error("inverse metric not positive definite");
        chol_upper_ = llt.matrixU();
    }

    const LogDensity& target_;
    Eigen::MatrixXd inv_metric_;
    Eigen::MatrixXd chol_upper_;
};

class StepSizeAdapter {
public:
    explicit StepSizeAdapter(double delta) : delta_(delta) {}

    void restart(double eps) {
        mu_ = std::log(10.0 * eps);
        counter_ = 0.0;
        s_bar_ = 0.0;
        x_bar_ = 0.0;
    }

    void learn(double& eps, double accept_stat) {
        counter_ += 1.0;
        accept_stat = std::min(1.0, accept_stat);
        const double eta = 1.0 / (counter_ + kT0);
        s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
        const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
        const double x_eta = std::pow(counter_, -kKappa);
        x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
        eps = std::exp(x);
    }

    void complete(double& eps) const { eps = std::exp(x_bar_); }

private:
    static constexpr double kGamma = 0.05;
    static constexpr double kKappa = 0.75;
    static constexpr double kT0 = 10.0;
    double delta_;
    double mu_ = 0.0;
    double counter_ = 0.0;
    double s_bar_ = 0.0;
    double x_bar_ = 0.0;
};

// Warmup schedule: fast initial buffer, doubling slow windows that each end
// with a metric update, and a final fast buffer.
class MetricAdapter {
public:
    MetricAdapter(int num_warmup, std::size_t dim, MetricKind kind) : num_warmup_(num_warmup), kind_(kind) {
        if (num_warmup < 20) {
            enabled_ = false;
            return;
        }
        if (init_buffer_ + base_window_ + term_buffer_ > num_warmup) {
            init_buffer_ = static_cast<int>(0.15 * num_warmup);
            term_buffer_ = static_cast<int>(0.1 * num_warmup);
            base_window_ = num_warmup - (init_buffer_ + term_buffer_);
        }
        window_size_ = base_window_;
        next_window_ = init_buffer_ + window_size_ - 1;
        mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
        m2_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    }

    /// Records the sample; returns true when a new inverse metric is ready.
    bool learn(const Eigen::VectorXd& q, Eigen::MatrixXd& inv_metric) {
        if (!enabled_) return false;
        if (in_window()) add(q);
        if (end_of_window()) {
            compute_next_window();
            const double n = static_cast<double>(count_);
            Eigen::MatrixXd cov = m2_ / (n - 1.0);
            if (kind_ == MetricKind::Diagonal) cov = Eigen::MatrixXd(cov.diagonal().asDiagonal());
            cov = (n / (n + 5.0)) * cov;
            cov.diagonal().array() += 1e-3 * (5.0 / (n + 5.0));
            inv_metric = cov;
            count_ = 0;
            mean_.setZero();
            m2_.setZero();
            ++counter_;
            return true;
        }
        ++counter_;
        return false;
    }

private:
    [[nodiscard]] bool in_window() const {
        return counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ && counter_ != num_warmup_;
    }
    [[nodiscard]] bool end_of_window() const { return counter_ == next_window_ && counter_ != num_warmup_; }

    void compute_next_window() {
        if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
        window_size_ *= 2;
        next_window_ = counter_ + window_size_;
        if (next_window_ != num_warmup_ - term_buffer_ - 1) {
            const int boundary = next_window_ + 2 * window_size_;
            if (boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
        }
    }

    void add(const Eigen::VectorXd& q) {
        ++count_;
        const Eigen::VectorXd delta = q - mean_;
        mean_ += delta / static_cast<double>(count_);
        m2_ += delta * (q - mean_).transpose();
    }

    int num_warmup_;
    MetricKind kind_;
    bool enabled_ = true;
    int init_buffer_ = 75;
    int term_buffer_ = 50;
    int base_window_ = 25;
    int window_size_ = 0;
    int next_window_ = 0;
    int counter_ = 0;
    int count_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd m2_;
};

struct TransitionStats {
    double accept_stat = 0.0;
    int depth = 0;
    bool divergent = false;
};

class Transition {
public:
    Transition(const Hamiltonian& h, const NutsConfig& cfg, RandomStream& rng) : h_(h), cfg_(cfg), rng_(rng) {}

    TransitionStats run(PhasePoint& current, double eps) {
        eps_ = eps;
        divergent_ = false;
        n_leapfrog_ = 0;
        sum_metro_prob_ = 0.0;

        h_.sample_momentum(current, rng_);
        PhasePoint z_fwd = current;
        PhasePoint z_bck = current;
        PhasePoint z_sample = current;
        PhasePoint z_propose = current;

        Eigen::VectorXd p_fwd_fwd = current.p, p_fwd_bck = current.p;
        Eigen::VectorXd p_bck_fwd = current.p, p_bck_bck = current.p;
        Eigen::VectorXd ps_fwd_fwd = h_.dtau_dp(current.p), ps_fwd_bck = ps_fwd_fwd;
        Eigen::VectorXd ps_bck_fwd = ps_fwd_fwd, ps_bck_bck = ps_fwd_fwd;
        Eigen::VectorXd rho = current.p;
        double log_sum_weight = 0.0;
        const double h0 = h_.hamiltonian(current);
        int depth = 0;

        while (depth < cfg_.max_tree_depth) {
            Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(rho.size());
            Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(rho.size());
            double lsw_subtree = -kInf;
            bool valid = false;
            if (rng_.uniform() > 0.5) {
                z_ = z_fwd;
                rho_bck = rho;
                p_bck_fwd = p_fwd_bck;
                ps_bck_fwd = ps_fwd_bck;
                valid = build_tree(depth, z_propose, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, h0, 1.0,
                                   lsw_subtree);
                z_fwd = z_;
            } else {
                z_ = z_bck;
                rho_fwd = rho;
                p_fwd_bck = p_bck_fwd;
                ps_fwd_bck = ps_bck_fwd;
                valid = build_tree(depth, z_propose, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, h0, -1.0,
                                   lsw_subtree);
                z_bck = z_;
            }
            if (!valid) break;
            ++depth;
            if (lsw_subtree > log_sum_weight) {
                z_sample = z_propose;
            } else if (rng_.uniform() < std::exp(lsw_subtree - log_sum_weight)) {
                z_sample = z_propose;
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
            rho = rho_bck + rho_fwd;
            bool persist = criterion(ps_bck_bck, ps_fwd_fwd, rho);
            Eigen::VectorXd rho_ext = rho_bck + p_fwd_bck;
            persist = persist && criterion(ps_bck_bck, ps_fwd_bck, rho_ext);
            rho_ext = rho_fwd + p_bck_fwd;
            persist = persist && criterion(ps_bck_fwd, ps_fwd_fwd, rho_ext);
            if (!persist) break;
        }
        current = z_sample;
        TransitionStats s;
        s.depth = depth;
        s.divergent = divergent_;
        s.accept_stat = n_leapfrog_ > 0 ? sum_metro_prob_ / n_leapfrog_ : 0.0;
        return s;
    }

private:
    static bool criterion(const Eigen::VectorXd& ps_minus, const Eigen::VectorXd& ps_plus,
                          const Eigen::VectorXd& rho) {
        return ps_plus.dot(rho) > 0.0 && ps_minus.dot(rho) > 0.0;
    }

    bool build_tree(int depth, PhasePoint& z_propose, Eigen::VectorXd& ps_beg, Eigen::VectorXd& ps_end,
                    Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end, double h0, double sign,
                    double& log_sum_weight) {
        if (depth == 0) {
            h_.leapfrog(z_, sign * eps_);
            ++n_leapfrog_;
            const double h = h_.hamiltonian(z_);
            if (h - h0 > cfg_.max_energy_error) divergent_ = true;
            log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
            sum_metro_prob_ += (h0 - h > 0.0) ? 1.0 : std::exp(h0 - h);
            z_propose = z_;
            ps_beg = h_.dtau_dp(z_.p);
            ps_end = ps_beg;
            rho += z_.p;
            p_beg = z_.p;
            p_end = p_beg;
            return !divergent_;
        }
        const auto n = rho.size();
        double lsw_init = -kInf;
        Eigen::VectorXd p_init_end(n), ps_init_end(n);
        Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(n);
        if (!build_tree(depth - 1, z_propose, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, h0, sign, lsw_init)) {
            return false;
        }
        PhasePoint z_propose_final = z_;
        double lsw_final = -kInf;
        Eigen::VectorXd p_final_beg(n), ps_final_beg(n);
        Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(n);
        if (!build_tree(depth - 1, z_propose_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, h0, sign,
                        lsw_final)) {
            return false;
        }
        const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
        if (lsw_final > lsw_subtree) {
            z_propose = z_propose_final;
        } else if (rng_.uniform() < std::exp(lsw_final - lsw_subtree)) {
            z_propose = z_propose_final;
        }
        const Eigen::VectorXd rho_subtree = rho_init + rho_final;
        rho += rho_subtree;
        bool persist = criterion(ps_beg, ps_end, rho_subtree);
        Eigen::VectorXd rho_ext = rho_init + p_final_beg;
        persist = persist && criterion(ps_beg, ps_final_beg, rho_ext);
        rho_ext = rho_final + p_init_end;
        persist = persist && criterion(ps_init_end, ps_end, rho_ext);
        return persist;
    }

    const Hamiltonian& h_;
    const NutsConfig& cfg_;
    RandomStream& rng_;
    PhasePoint z_;
    double eps_ = 1.0;
    bool divergent_ = false;
    int n_leapfrog_ = 0;
    double sum_metro_prob_ = 0.0;
};

// Doubles or halves eps until a single leapfrog step crosses an acceptance
// probability of 0.8.
double find_reasonable_step_size(const Hamiltonian& h, const PhasePoint& start, double eps, RandomStream& rng) {
    PhasePoint z = start;
    h.sample_momentum(z, rng);
    double h0 = h.hamiltonian(z);
    h.leapfrog(z, eps);
    double delta_h = h0 - h.hamiltonian(z);
    const int direction = delta_h > std::log(0.8) ? 1 : -1;
    for (int iter = 0; iter < 200; ++iter) {
        z = start;
        h.sample_momentum(z, rng);
        h0 = h.hamiltonian(z);
        h.leapfrog(z, eps);
        delta_h = h0 - h.hamiltonian(z);
        if (direction == 1 && !(delta_h > std::log(0.8))) break;
        if (direction == -1 && !(delta_h < std::log(0.8))) break;
        eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
        if (eps > 1e7 || eps < 1e-12) break;
    }
    return eps;
}

}  // namespace

NutsSampler::NutsSampler(const LogDensity& target, NutsConfig config) : target_(target), config_(config) {
    if (config_.draws < 1 || config_.tune < 0) throw std::invalid_argument("NUTS draws must be positive");
    if (!(config_.target_accept > 0.0 && config_.target_accept < 1.0)) {
        throw std::invalid_argument("target_accept must lie in (0,1)");
    }
}

NutsChain NutsSampler::run(const Eigen::VectorXd& init, RandomStream rng) const {
    const auto dim = target_.dim();
    Hamiltonian ham(target_, dim);
    PhasePoint z;
    z.q = init;
    z.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    ham.update_potential(z);
    if (!std::isfinite(z.logp)) throw std::runtime_error("non-finite log density at initial point");

    double eps = find_reasonable_step_size(ham, z, 1.0, rng);
    StepSizeAdapter step_adapter(config_.target_accept);
    step_adapter.restart(eps);
    MetricAdapter metric_adapter(config_.tune, dim, config_.metric);
    Transition transition(ham, config_, rng);

    NutsChain chain;
    chain.draws.reserve(static_cast<std::size_t>(config_.draws));
    double accept_sum = 0.0;
    double depth_sum = 0.0;
    for (int it = 0; it < config_.tune + config_.draws; ++it) {
        const bool warmup = it < config_.tune;
        const auto stats = transition.run(z, eps);
        if (warmup) {
            chain.warmup_divergences += stats.divergent;
            step_adapter.learn(eps, stats.accept_stat);
            Eigen::MatrixXd inv_metric;
            if (metric_adapter.learn(z.q, inv_metric)) {
                ham.set_inverse_metric(inv_metric);
                eps = find_reasonable_step_size(ham, z, eps, rng);
                step_adapter.restart(eps);
            }
            if (it + 1 == config_.tune) step_adapter.complete(eps);
        } else {
            chain.divergences += stats.divergent;
            accept_sum += stats.accept_stat;
            depth_sum += stats.depth;
            chain.draws.push_back(z.q);
        }
    }
    chain.step_size = eps;
    chain.mean_accept_stat = accept_sum / config_.draws;
    chain.mean_tree_depth = depth_sum / config_.draws;
    chain.inverse_metric = ham.inverse_metric();
    return chain;
}

}  // namespace riskpref
