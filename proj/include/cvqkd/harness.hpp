#pragma once

#include "cvqkd/channel.hpp"
#include "cvqkd/preparation.hpp"
#include "cvqkd/security.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cvqkd {

enum class AttackKind { none, entangling_cloner };
enum class BobBasisPolicy { fixed_q, random };

/// One end-to-end Monte Carlo pipeline: prepare -> channel/attack -> measure.
struct RunConfig {
    PreparationConfig prep{};
    ChannelModel channel{};
    AttackKind attack = AttackKind::none;
    std::size_t n = 100000;
    std::uint64_t seed = 1;
    BobBasisPolicy bob_basis_policy = BobBasisPolicy::fixed_q;
    unsigned threads = 1;

    void validate() const;
};

struct Estimate {
    double value = 0.0;
    double stderr_est = 0.0;

    double z_against(double analytic) const {
        return (value - analytic) / (stderr_est > 0.0 ? stderr_est : 1.0);
    }
};

struct RunResult {
    RunConfig config{};
    SampleBatch samples;                 // Q_A, P_A, Q_B, P_B [, Eve columns]
    std::vector<Quadrature> alice_basis; // single-quadrature prep only
    std::vector<Quadrature> bob_basis;   // random policy only
    GaussianEnsemble empirical;          // empirical mean/cov over the columns
    Estimate v_ba_hat{};
    Estimate i_ba_hat{};
    std::optional<Estimate> v_be_hat{};
    std::optional<Estimate> i_be_hat{};

    RunResult() : empirical({}, Eigen::VectorXd(), Eigen::MatrixXd(), 1.0) {}
};

/// Deterministic for a fixed seed; thread count only affects scheduling.
RunResult run(const RunConfig& cfg);

/// Analytic counterparts of the run estimates for the same configuration
/// (joint-mode preparation, symmetric channel).
struct AnalyticTargets {
    double var_qb;  // G(V + chi) n0
    double v_ba;    // G(chi + s) n0
    double v_be;    // n0/(G(chi + 1/V))
    double i_ba;    // 1/2 log2((V+chi)/(s+chi))
    double i_be;    // 1/2 log2[(GV+Gchi)(Gchi+G/V)]
};
AnalyticTargets analytic_targets(const RunConfig& cfg);

/// Basis-sifting bookkeeping for single-quadrature preparation with Bob
/// choosing bases at random.
struct SiftingResult {
    double retained_fraction = 1.0;
    double fraction_stderr = 0.0;
    std::size_t retained = 0;
    Estimate retained_v_ba{}; // V_{Q_B|Q_A} over the retained Q-basis subset
    /// Basis-matched key elements (Q pairs first, then P pairs).
    std::vector<double> retained_alice;
    std::vector<double> retained_bob;
};
SiftingResult sifting(const RunResult& result);

/// One verification row: an empirical estimate against its analytic value.
struct SweepRow {
    double g, eps, v, mu;
    std::string attack;
    std::size_t n;
    std::uint64_t seed;
    std::string quantity;
    std::optional<double> analytic{};
    std::optional<double> empirical{};
    std::optional<double> stderr_est{};
    std::optional<double> z{};
    bool pass = true;
};

struct SweepGrid {
    std::vector<double> g_values{0.9, 0.5, 0.1};
    std::vector<double> eps_values{0.0, 0.2};
    std::vector<double> v_values{4.0, 10.0};
    double mu = 1.0;
    AttackKind attack = AttackKind::entangling_cloner;
    std::size_t n = 1000000;
    std::uint64_t seed = 20240901;
    unsigned threads = 1;
    double z_gate = 5.0;
};

/// Run every grid point and emit (analytic, empirical, z) rows for v_ba, i_ba
/// and, when the attack produces Eve records, v_be and i_be. Grid point k uses
/// the derived seed derive_stream(seed, k); output is independent of thread
/// count and evaluation order.
std::vector<SweepRow> sweep(const SweepGrid& grid);

/// Bootstrap cross-check (row resampling with replacement) of the analytic
/// chi-square standard error used for conditional-variance estimates.
double bootstrap_variance_stderr(const SampleBatch& b, const std::string& target,
                                 std::span<const std::string> given, int resamples,
                                 std::uint64_t seed);

} // namespace cvqkd
