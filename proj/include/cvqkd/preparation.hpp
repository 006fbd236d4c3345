#pragma once

#include "cvqkd/gaussian.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace cvqkd {

enum class PreparationMode { single_quadrature, joint };
enum class Quadrature : std::uint8_t { q = 0, p = 1 };

/// Alice's source settings: total modulation variance V and either a joint
/// Q/P measurement of noise asymmetry mu, or a single homodyne measurement.
/// In single mode the measured quadrature alternates randomly per draw unless
/// pinned with `measured_quadrature`.
struct PreparationConfig {
    double v = 1.0;
    PreparationMode mode = PreparationMode::joint;
    double mu = 1.0;                                   // joint mode only
    std::optional<Quadrature> measured_quadrature{};   // single mode only
    double n0 = 1.0;

    void validate() const;
    /// Squeezing of the transmitted state in joint mode, s = (mu V + 1)/(V + mu).
    double squeezing() const;
};

/// Beamsplitter transmission realizing a joint measurement of asymmetry mu:
/// T = 1/(1+mu).
double mu_to_transmission(double mu);

/// s = (mu v + 1)/(v + mu); s = 1 iff mu = 1, s -> 1/V as mu -> 0, s -> V as mu -> inf.
double squeezing_of(double v, double mu);

/// Alice's optimal estimate of `target` from one homodyne value of `measured`:
/// alpha * value with alpha = <target measured>/<measured^2>.
double alice_estimator_single(const GaussianEnsemble& e, double value,
                              const std::string& target = "Q", const std::string& measured = "Q'");

/// One prepared symbol: Alice's estimators and the conditional variances of
/// the transmitted beam given them. In single mode the unmeasured estimator is
/// absent and `basis` records the measured quadrature.
struct PreparedState {
    std::optional<double> qa;
    std::optional<double> pa;
    double conditional_q = 0.0; // V_{Q|Q_A}, n0 units times n0
    double conditional_p = 0.0; // V_{P|P_A}
    double squeezing = 1.0;
    std::optional<Quadrature> basis{};
};

/// Output of a preparation run. `batch` holds columns (Q_A, P_A, Q, P); in
/// single mode the unmeasured estimator column is NaN for that draw and
/// `basis` holds the per-draw choice.
struct PreparedRun {
    SampleBatch batch;
    std::vector<Quadrature> basis; // empty in joint mode
    double conditional_q = 0.0;
    double conditional_p = 0.0;
    double squeezing = 1.0;

    std::vector<PreparedState> states() const;
};

/// EPR-source path: sample the two-mode state, measure Alice's half (single
/// homodyne, or an optimal joint measurement with noises (mu*n0, n0/mu)), and
/// form the estimators Q_A = sqrt(V^2-1)/(V+mu) (Q' - dQ'_A),
/// P_A = -sqrt(V^2-1)/(V+1/mu) (P' - dP'_A).
PreparedRun prepare_via_epr(const PreparationConfig& cfg, std::size_t n, std::uint64_t seed,
                            unsigned threads = 1);

/// Equivalent black box: draw Q_A ~ N(0,(V-s)n0), P_A ~ N(0,(V-1/s)n0) and
/// send Q = Q_A + delta with delta ~ N(0, s*n0) (similarly P with n0/s). The
/// joint law of (Q_A, P_A, Q, P) matches prepare_via_epr.
PreparedRun prepare_direct(const PreparationConfig& cfg, std::size_t n, std::uint64_t seed,
                           unsigned threads = 1);

/// Analytic covariance of (Q_A, P_A, Q, P) for a joint-mode preparation;
/// the target both preparation paths must agree on.
GaussianEnsemble prepared_ensemble(const PreparationConfig& cfg);

} // namespace cvqkd
