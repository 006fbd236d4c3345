#include "cvqkd/harness.hpp"
#include "cvqkd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvqkd {

namespace {

constexpr std::uint64_t kPrepStream = 0x1ULL;
constexpr std::uint64_t kChannelStream = 0x2ULL;
constexpr std::uint64_t kBobBasisStream = 0x3ULL;

/// Delta-method standard error of a parametric-Gaussian mutual-information
/// estimate, regularized so the z-gate stays meaningful near rho = 0.
double mi_stderr(double var_total, double var_cond, std::size_t n) {
    double r2 = 1.0 - var_cond / var_total;
    if (r2 < 0.0) r2 = 0.0;
    const double r = std::sqrt(r2);
    const double sqn = std::sqrt(static_cast<double>(n));
    return (r + 1.0 / sqn) / (sqn * std::log(2.0));
}

Estimate mi_estimate(double var_total, double var_cond, std::size_t n) {
    Estimate e;
    e.value = 0.5 * std::log2(var_total / var_cond);
    e.stderr_est = mi_stderr(var_total, var_cond, n);
    return e;
}

} // namespace

void RunConfig::validate() const {
    prep.validate();
    if (n < 1) throw std::invalid_argument("run: need n >= 1");
    if (attack == AttackKind::entangling_cloner && !channel.symmetric())
        throw std::invalid_argument("entangling cloner requires a symmetric channel");
}

RunResult run(const RunConfig& cfg) {
    cfg.validate();
    RunResult result;
    result.config = cfg;

    PreparedRun prep = prepare_direct(cfg.prep, cfg.n, derive_stream(cfg.seed, kPrepStream),
                                      cfg.threads);
    result.alice_basis = prep.basis;

    SampleBatch bob;
    if (cfg.attack == AttackKind::none) {
        bob = propagate(cfg.channel, prep.batch, derive_stream(cfg.seed, kChannelStream),
                        cfg.threads);
    } else {
        ClonerRun cloner = entangling_cloner_simulate(
            cfg.channel, cfg.prep.v, prep.batch, derive_stream(cfg.seed, kChannelStream),
            cfg.threads);
        bob = prep.batch;
        bob.labels = {"Q_A", "P_A", "Q_B", "P_B"};
        bob.data.col(2) = cloner.batch.col("Q_B");
        bob.data.col(3) = cloner.batch.col("P_B");
        SampleBatch eve;
        eve.n0 = cloner.batch.n0;
        eve.seed = cloner.batch.seed;
        eve.labels = {"Q_E2", "P_E2"};
        eve.data = cloner.batch.data.middleCols(2, 2);
        if (cloner.has_known_part) {
            eve.labels.push_back("Q_EK");
            eve.labels.push_back("P_EK");
            Eigen::MatrixXd joined(eve.data.rows(), 4);
            joined << eve.data, cloner.batch.data.middleCols(4, 2);
            eve.data = std::move(joined);
        }
        bob.append(eve);
    }

    result.samples = std::move(bob);

    if (cfg.bob_basis_policy == BobBasisPolicy::random) {
        Rng rng(derive_stream(cfg.seed, kBobBasisStream));
        result.bob_basis.resize(cfg.n);
        for (auto& b : result.bob_basis) b = rng.bernoulli() ? Quadrature::p : Quadrature::q;
    }

    const bool joint_prep = cfg.prep.mode == PreparationMode::joint;
    if (joint_prep) {
        Eigen::MatrixXd cov = empirical_covariance(result.samples);
        Eigen::VectorXd mean = result.samples.data.colwise().mean();
        result.empirical = GaussianEnsemble(result.samples.labels, std::move(mean), std::move(cov),
                                            result.samples.n0);

        auto v_ba = empirical_conditional_variance(result.samples, "Q_B", {"Q_A"});
        result.v_ba_hat = Estimate{v_ba.variance, v_ba.stderr_est};
        auto var_qb = empirical_conditional_variance(result.samples, "Q_B", {});
        result.i_ba_hat = mi_estimate(var_qb.variance, v_ba.variance, cfg.n);

        if (cfg.attack == AttackKind::entangling_cloner) {
            const bool known = std::find(result.samples.labels.begin(), result.samples.labels.end(),
                                         "Q_EK") != result.samples.labels.end();
            auto v_be = known
                            ? empirical_conditional_variance(result.samples, "Q_B", {"Q_E2", "Q_EK"})
                            : empirical_conditional_variance(result.samples, "Q_B", {"Q_E2"});
            result.v_be_hat = Estimate{v_be.variance, v_be.stderr_est};
            result.i_be_hat = mi_estimate(var_qb.variance, v_be.variance, cfg.n);
        }
    }
    return result;
}

AnalyticTargets analytic_targets(const RunConfig& cfg) {
    if (cfg.prep.mode != PreparationMode::joint)
        throw std::invalid_argument("analytic_targets covers joint-mode preparation");
    if (!cfg.channel.symmetric())
        throw std::invalid_argument("analytic_targets covers symmetric channels");
    const double g = cfg.channel.g_q, chi = cfg.channel.chi_q;
    const double v = cfg.prep.v, s = cfg.prep.squeezing(), n0 = cfg.prep.n0;
    AnalyticTargets t{};
    t.var_qb = g * (v + chi) * n0;
    t.v_ba = alice_conditional_variance(cfg.channel, v, s, n0).first;
    t.v_be = eve_conditional_variance_bound(cfg.channel, v, n0).first;
    t.i_ba = mutual_info_ba(g, chi, v, s);
    t.i_be = mutual_info_be_rr(g, chi, v);
    return t;
}

SiftingResult sifting(const RunResult& result) {
    SiftingResult out;
    const auto n = static_cast<std::size_t>(result.samples.n());
    if (result.alice_basis.empty()) {
        // Joint preparation measures both quadratures: nothing is discarded.
        out.retained = n;
        out.retained_fraction = 1.0;
        return out;
    }
    if (result.bob_basis.empty())
        throw std::invalid_argument("sifting: run with bob_basis_policy = random expected");

    std::vector<Eigen::Index> keep_q, keep_p;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (result.alice_basis[i] == result.bob_basis[i]) {
            ++kept;
            if (result.alice_basis[i] == Quadrature::q)
                keep_q.push_back(static_cast<Eigen::Index>(i));
            else
                keep_p.push_back(static_cast<Eigen::Index>(i));
        }
    }
    out.retained = kept;
    out.retained_fraction = static_cast<double>(kept) / static_cast<double>(n);
    out.fraction_stderr = std::sqrt(0.25 / static_cast<double>(n));

    SampleBatch sub;
    sub.labels = {"Q_A", "Q_B"};
    sub.n0 = result.samples.n0;
    sub.seed = result.samples.seed;
    sub.data.resize(static_cast<Eigen::Index>(keep_q.size()), 2);
    const auto iqa = result.samples.index_of("Q_A");
    const auto iqb = result.samples.index_of("Q_B");
    for (std::size_t r = 0; r < keep_q.size(); ++r) {
        sub.data(static_cast<Eigen::Index>(r), 0) = result.samples.data(keep_q[r], iqa);
        sub.data(static_cast<Eigen::Index>(r), 1) = result.samples.data(keep_q[r], iqb);
    }
    auto est = empirical_conditional_variance(sub, "Q_B", {"Q_A"});
    out.retained_v_ba = Estimate{est.variance, est.stderr_est};

    out.retained_alice.reserve(kept);
    out.retained_bob.reserve(kept);
    const auto ipa = result.samples.index_of("P_A");
    const auto ipb = result.samples.index_of("P_B");
    for (auto r : keep_q) {
        out.retained_alice.push_back(result.samples.data(r, iqa));
        out.retained_bob.push_back(result.samples.data(r, iqb));
    }
    for (auto r : keep_p) {
        out.retained_alice.push_back(result.samples.data(r, ipa));
        out.retained_bob.push_back(result.samples.data(r, ipb));
    }
    return out;
}

double bootstrap_variance_stderr(const SampleBatch& b, const std::string& target,
                                 std::span<const std::string> given, int resamples,
                                 std::uint64_t seed) {
    if (resamples < 2) throw std::invalid_argument("bootstrap: need at least 2 resamples");
    const auto n = b.n();
    std::vector<double> estimates;
    estimates.reserve(static_cast<std::size_t>(resamples));
    SampleBatch draw;
    draw.labels = b.labels;
    draw.n0 = b.n0;
    draw.data.resize(n, b.data.cols());
    for (int r = 0; r < resamples; ++r) {
        Rng rng(derive_stream(seed, static_cast<std::uint64_t>(r)));
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto pick = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
            draw.data.row(i) = b.data.row(std::min(pick, n - 1));
        }
        estimates.push_back(empirical_conditional_variance(draw, target, given).variance);
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    double ss = 0.0;
    for (double e : estimates) ss += (e - mean) * (e - mean);
    return std::sqrt(ss / static_cast<double>(estimates.size() - 1));
}

std::vector<SweepRow> sweep(const SweepGrid& grid) {
    if (grid.g_values.empty() || grid.eps_values.empty() || grid.v_values.empty())
        throw std::invalid_argument("sweep: empty grid");

    std::vector<SweepRow> rows;
    std::uint64_t point = 0;
    for (double g : grid.g_values) {
        for (double eps : grid.eps_values) {
            for (double v : grid.v_values) {
                RunConfig cfg;
                cfg.prep.v = v;
                cfg.prep.mode = PreparationMode::joint;
                cfg.prep.mu = grid.mu;
                cfg.channel = ChannelModel::from_gain_excess(g, eps);
                cfg.attack = grid.attack;
                cfg.n = grid.n;
                cfg.seed = derive_stream(grid.seed, point++);
                cfg.threads = grid.threads;

                RunResult res = run(cfg);
                AnalyticTargets t = analytic_targets(cfg);

                auto push = [&](const std::string& name, double analytic,
                                const std::optional<Estimate>& est) {
                    SweepRow row;
                    row.g = g;
                    row.eps = eps;
                    row.v = v;
                    row.mu = grid.mu;
                    row.attack = grid.attack == AttackKind::none ? "none" : "entangling_cloner";
                    row.n = grid.n;
                    row.seed = cfg.seed;
                    row.quantity = name;
                    if (est) {
                        row.analytic = analytic;
                        row.empirical = est->value;
                        row.stderr_est = est->stderr_est;
                        row.z = est->z_against(analytic);
                        row.pass = std::abs(*row.z) <= grid.z_gate;
                    }
                    rows.push_back(std::move(row));
                };

                push("v_ba", t.v_ba, res.v_ba_hat);
                push("i_ba", t.i_ba, res.i_ba_hat);
                push("v_be", t.v_be, res.v_be_hat);
                push("i_be", t.i_be, res.i_be_hat);
            }
        }
    }
    return rows;
}

} // namespace cvqkd
