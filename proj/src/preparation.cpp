#include "cvqkd/preparation.hpp"
#include "cvqkd/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cvqkd {

namespace {
constexpr std::uint64_t kBasisStream = 0xA11CEBA5ULL;
}

void PreparationConfig::validate() const {
    if (n0 <= 0.0) throw std::invalid_argument("shot noise n0 must be positive");
    if (v < 1.0) throw std::domain_error("modulation variance V must be >= 1 (sub-vacuum modulation)");
    if (mode == PreparationMode::joint) {
        if (mu <= 0.0) throw std::invalid_argument("joint mode requires mu > 0");
        if (measured_quadrature)
            throw std::invalid_argument("measured_quadrature is a single-mode parameter");
    }
}

double PreparationConfig::squeezing() const {
    if (mode == PreparationMode::single_quadrature) return 1.0 / v;
    return squeezing_of(v, mu);
}

double mu_to_transmission(double mu) {
    if (mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
    return 1.0 / (1.0 + mu);
}

double squeezing_of(double v, double mu) {
    if (v < 1.0) throw std::domain_error("modulation variance V must be >= 1");
    if (mu < 0.0) throw std::invalid_argument("mu must be nonnegative");
    return (mu * v + 1.0) / (v + mu);
}

double alice_estimator_single(const GaussianEnsemble& e, double value,
                              const std::string& target, const std::string& measured) {
    const double var_m = e.variance(measured);
    if (var_m <= 0.0) throw std::domain_error("measured quadrature has zero variance");
    return e.covariance(target, measured) / var_m * value;
}

std::vector<PreparedState> PreparedRun::states() const {
    std::vector<PreparedState> out;
    const auto n = batch.n();
    out.reserve(static_cast<std::size_t>(n));
    const auto iqa = batch.index_of("Q_A"), ipa = batch.index_of("P_A");
    const double n0 = batch.n0;
    for (Eigen::Index i = 0; i < n; ++i) {
        PreparedState st;
        const double qa = batch.data(i, iqa), pa = batch.data(i, ipa);
        if (!std::isnan(qa)) st.qa = qa;
        if (!std::isnan(pa)) st.pa = pa;
        if (basis.empty()) {
            st.conditional_q = conditional_q;
            st.conditional_p = conditional_p;
            st.squeezing = squeezing;
        } else {
            // Single-quadrature draw: the measured side is squeezed to n0/V,
            // the other is unconditioned at V*n0.
            const double big_v = 1.0 / squeezing; // run-level squeezing is 1/V
            if (basis[static_cast<std::size_t>(i)] == Quadrature::q) {
                st.conditional_q = n0 / big_v;
                st.conditional_p = big_v * n0;
            } else {
                st.conditional_q = big_v * n0;
                st.conditional_p = n0 / big_v;
            }
            st.squeezing = st.conditional_q / n0;
            st.basis = basis[static_cast<std::size_t>(i)];
        }
        out.push_back(st);
    }
    return out;
}

namespace {

PreparedRun finalize_joint(SampleBatch&& batch, const PreparationConfig& cfg) {
    PreparedRun run;
    run.batch = std::move(batch);
    run.squeezing = cfg.squeezing();
    run.conditional_q = run.squeezing * cfg.n0;
    run.conditional_p = cfg.n0 / run.squeezing;
    return run;
}

std::vector<Quadrature> draw_basis(const PreparationConfig& cfg, std::size_t n, std::uint64_t seed) {
    std::vector<Quadrature> basis(n);
    if (cfg.measured_quadrature) {
        std::fill(basis.begin(), basis.end(), *cfg.measured_quadrature);
    } else {
        Rng rng(derive_stream(seed, kBasisStream));
        for (auto& b : basis) b = rng.bernoulli() ? Quadrature::p : Quadrature::q;
    }
    return basis;
}

PreparedRun finalize_single(SampleBatch&& batch, std::vector<Quadrature>&& basis,
                            const PreparationConfig& cfg) {
    PreparedRun run;
    run.batch = std::move(batch);
    run.basis = std::move(basis);
    run.squeezing = 1.0 / cfg.v;
    run.conditional_q = cfg.n0 / cfg.v;
    run.conditional_p = cfg.v * cfg.n0;
    return run;
}

} // namespace

PreparedRun prepare_via_epr(const PreparationConfig& cfg, std::size_t n, std::uint64_t seed,
                            unsigned threads) {
    cfg.validate();
    const double v = cfg.v, n0 = cfg.n0;
    const double corr = std::sqrt(v * v - 1.0);

    if (cfg.mode == PreparationMode::joint) {
        const double mu = cfg.mu;
        auto source = epr_ensemble(v, {n0}).tensor(
            GaussianEnsemble::diagonal({"dQ'_A", "dP'_A"}, {mu, 1.0 / mu}, n0));
        SampleBatch s = sample(source, n, seed, threads);

        const double cq = corr / (v + mu);
        const double cp = corr / (v + 1.0 / mu);
        const Eigen::VectorXd qp = s.col("Q'") - s.col("dQ'_A");
        const Eigen::VectorXd pp = s.col("P'") - s.col("dP'_A");

        SampleBatch out;
        out.labels = {"Q_A", "P_A", "Q", "P"};
        out.seed = seed;
        out.n0 = n0;
        out.data.resize(s.n(), 4);
        out.data.col(0) = cq * qp;
        out.data.col(1) = -cp * pp;
        out.data.col(2) = s.col("Q");
        out.data.col(3) = s.col("P");
        return finalize_joint(std::move(out), cfg);
    }

    SampleBatch s = sample(epr_ensemble(v, {n0}), n, seed, threads);
    auto basis = draw_basis(cfg, n, seed);
    const double alpha = corr / v;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    SampleBatch out;
    out.labels = {"Q_A", "P_A", "Q", "P"};
    out.seed = seed;
    out.n0 = n0;
    out.data.resize(s.n(), 4);
    for (Eigen::Index i = 0; i < s.n(); ++i) {
        const bool q_basis = basis[static_cast<std::size_t>(i)] == Quadrature::q;
        out.data(i, 0) = q_basis ? alpha * s.data(i, 0) : nan;
        out.data(i, 1) = q_basis ? nan : -alpha * s.data(i, 1);
        out.data(i, 2) = s.data(i, 2);
        out.data(i, 3) = s.data(i, 3);
    }
    return finalize_single(std::move(out), std::move(basis), cfg);
}

PreparedRun prepare_direct(const PreparationConfig& cfg, std::size_t n, std::uint64_t seed,
                           unsigned threads) {
    cfg.validate();
    const double v = cfg.v, n0 = cfg.n0;

    if (cfg.mode == PreparationMode::joint) {
        const double s = cfg.squeezing();
        auto source = GaussianEnsemble::diagonal({"Q_A", "P_A", "dQ", "dP"},
                                                 {v - s, v - 1.0 / s, s, 1.0 / s}, n0);
        SampleBatch draws = sample(source, n, seed, threads);

        SampleBatch out;
        out.labels = {"Q_A", "P_A", "Q", "P"};
        out.seed = seed;
        out.n0 = n0;
        out.data.resize(draws.n(), 4);
        out.data.col(0) = draws.data.col(0);
        out.data.col(1) = draws.data.col(1);
        out.data.col(2) = draws.data.col(0) + draws.data.col(2);
        out.data.col(3) = draws.data.col(1) + draws.data.col(3);
        return finalize_joint(std::move(out), cfg);
    }

    // Single mode: the measured side is modulated with variance (V - 1/V)n0
    // and squeezed to n0/V; the other side is an unmodulated thermal-looking
    // quadrature of variance V*n0.
    auto source = GaussianEnsemble::diagonal({"mod", "dsq", "other"},
                                             {v - 1.0 / v, 1.0 / v, v}, n0);
    SampleBatch draws = sample(source, n, seed, threads);
    auto basis = draw_basis(cfg, n, seed);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    SampleBatch out;
    out.labels = {"Q_A", "P_A", "Q", "P"};
    out.seed = seed;
    out.n0 = n0;
    out.data.resize(draws.n(), 4);
    for (Eigen::Index i = 0; i < draws.n(); ++i) {
        const double mod = draws.data(i, 0), dsq = draws.data(i, 1), other = draws.data(i, 2);
        if (basis[static_cast<std::size_t>(i)] == Quadrature::q) {
            out.data(i, 0) = mod;
            out.data(i, 1) = nan;
            out.data(i, 2) = mod + dsq;
            out.data(i, 3) = other;
        } else {
            out.data(i, 0) = nan;
            out.data(i, 1) = mod;
            out.data(i, 2) = other;
            out.data(i, 3) = mod + dsq;
        }
    }
    return finalize_single(std::move(out), std::move(basis), cfg);
}

GaussianEnsemble prepared_ensemble(const PreparationConfig& cfg) {
    cfg.validate();
    if (cfg.mode != PreparationMode::joint)
        throw std::invalid_argument("prepared_ensemble covers joint mode; single mode is per-basis");
    const double v = cfg.v, n0 = cfg.n0, s = cfg.squeezing();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(4, 4);
    cov(0, 0) = (v - s) * n0;
    cov(1, 1) = (v - 1.0 / s) * n0;
    cov(2, 2) = v * n0;
    cov(3, 3) = v * n0;
    cov(0, 2) = cov(2, 0) = (v - s) * n0;
    cov(1, 3) = cov(3, 1) = (v - 1.0 / s) * n0;
    return GaussianEnsemble({"Q_A", "P_A", "Q", "P"}, std::move(cov), n0);
}

} // namespace cvqkd
