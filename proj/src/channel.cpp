#include "cvqkd/channel.hpp"
#include "cvqkd/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cvqkd {

namespace {
constexpr std::uint64_t kChannelStream = 0xC4A27ULL;
constexpr std::uint64_t kClonerStream = 0xE7E12ULL;
constexpr double kEpsTol = 1e-12;
} // namespace

ChannelModel::ChannelModel(double g_q_in, double g_p_in, double chi_q_in, double chi_p_in)
    : g_q(g_q_in), g_p(g_p_in), chi_q(chi_q_in), chi_p(chi_p_in) {
    if (g_q <= 0.0 || g_p <= 0.0) throw std::invalid_argument("channel gains must be positive");
    if (chi_q < 0.0 || chi_p < 0.0) throw std::invalid_argument("channel noise chi must be nonnegative");
    if (eps_q() < -kEpsTol || eps_p() < -kEpsTol)
        throw std::invalid_argument("chi below the vacuum noise (1-G)/G: negative excess noise rejected");
}

ChannelModel ChannelModel::from_gain_excess(double g, double eps) {
    if (g <= 0.0) throw std::invalid_argument("channel gain must be positive");
    if (eps < 0.0) throw std::invalid_argument("excess noise must be nonnegative");
    const double chi = std::max((1.0 - g) / g + eps, 0.0);
    return ChannelModel(g, g, chi, chi);
}

ChannelModel ChannelModel::from_loss_db(double loss_db, double eps) {
    return from_gain_excess(loss_db_to_gain(loss_db), eps);
}

bool ChannelModel::symmetric() const {
    return g_q == g_p && chi_q == chi_p;
}

ChannelModel ChannelModel::after(const ChannelModel& inner) const {
    return ChannelModel(g_q * inner.g_q, g_p * inner.g_p,
                        inner.chi_q + chi_q / inner.g_q, inner.chi_p + chi_p / inner.g_p);
}

double loss_db_to_gain(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }
double gain_to_loss_db(double g) { return -10.0 * std::log10(g); }

SampleBatch propagate(const ChannelModel& ch, const SampleBatch& transmitted, std::uint64_t seed,
                      unsigned threads) {
    const double n0 = transmitted.n0;
    auto noise_src = GaussianEnsemble::diagonal({"dQ_B", "dP_B"}, {ch.chi_q, ch.chi_p}, n0);
    SampleBatch noise = sample(noise_src, static_cast<std::size_t>(transmitted.n()),
                               derive_stream(seed, kChannelStream), threads);

    SampleBatch out = transmitted;
    const auto iq = out.index_of("Q"), ip = out.index_of("P");
    out.data.col(iq) = std::sqrt(ch.g_q) * (transmitted.col("Q") + noise.data.col(0));
    out.data.col(ip) = std::sqrt(ch.g_p) * (transmitted.col("P") + noise.data.col(1));
    out.labels[static_cast<std::size_t>(iq)] = "Q_B";
    out.labels[static_cast<std::size_t>(ip)] = "P_B";
    return out;
}

GaussianEnsemble propagate_ensemble(const ChannelModel& ch, const GaussianEnsemble& e) {
    const auto iq = e.index_of("Q"), ip = e.index_of("P");
    const double n0 = e.n0();
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(e.size(), e.size());
    m(iq, iq) = std::sqrt(ch.g_q);
    m(ip, ip) = std::sqrt(ch.g_p);
    Eigen::MatrixXd cov = m * e.cov() * m.transpose();
    cov(iq, iq) += ch.g_q * ch.chi_q * n0;
    cov(ip, ip) += ch.g_p * ch.chi_p * n0;
    std::vector<std::string> labels = e.labels();
    labels[static_cast<std::size_t>(iq)] = "Q_B";
    labels[static_cast<std::size_t>(ip)] = "P_B";
    return GaussianEnsemble(std::move(labels), m * e.mean(), std::move(cov), n0);
}

std::pair<double, double> alice_conditional_variance(const ChannelModel& ch, double v, double s,
                                                     double n0) {
    if (v < 1.0) throw std::domain_error("V must be >= 1");
    if (s < 1.0 / v - kEpsTol || s > v + kEpsTol)
        throw std::domain_error("squeezing s must lie in [1/V, V]");
    return {ch.g_q * (ch.chi_q + s) * n0, ch.g_p * (ch.chi_p + 1.0 / s) * n0};
}

std::pair<double, double> eve_conditional_variance_bound(const ChannelModel& ch, double v,
                                                         double n0) {
    if (v < 1.0) throw std::domain_error("V must be >= 1");
    const double dq = ch.g_p * (ch.chi_p + 1.0 / v);
    const double dp = ch.g_q * (ch.chi_q + 1.0 / v);
    const double inf = std::numeric_limits<double>::infinity();
    return {dq > 0.0 ? n0 / dq : inf, dp > 0.0 ? n0 / dp : inf};
}

AttackBound attack_bound(const ChannelModel& ch, double v, double n0) {
    auto [eq, ep] = eve_conditional_variance_bound(ch, v, n0);
    return AttackBound{
        ch.g_q * (ch.chi_q + 1.0 / v) * n0,
        ch.g_p * (ch.chi_p + 1.0 / v) * n0,
        eq,
        ep,
    };
}

ClonerRun entangling_cloner_simulate(const ChannelModel& ch, double v,
                                     const SampleBatch& transmitted, std::uint64_t seed,
                                     unsigned threads) {
    if (!ch.symmetric())
        throw std::invalid_argument("entangling cloner: construction requires a symmetric channel");
    const double g = ch.g_q, chi = ch.chi_q;
    if (g >= 1.0) throw std::domain_error("entangling cloner: construction only defined for G < 1");
    if (g <= 0.0) throw std::domain_error("entangling cloner: G must be positive");

    const double n0 = transmitted.n0;
    // Injected EPR half: variance W; Eve knows all but n0^2/W of it.
    const double w = g * chi * n0 / (1.0 - g);
    const double unknown_var = w > 0.0 ? n0 * n0 / w : 0.0;
    const double known_var = std::max(w - unknown_var, 0.0);
    const bool has_known = known_var > 1e-12 * n0;

    auto noise_src = GaussianEnsemble::diagonal(
        {"Q_EK", "Q_EU", "P_EK", "P_EU"},
        {known_var / n0, unknown_var / n0, known_var / n0, unknown_var / n0}, n0);
    SampleBatch eve = sample(noise_src, static_cast<std::size_t>(transmitted.n()),
                             derive_stream(seed, kClonerStream), threads);

    const double sg = std::sqrt(g), sr = std::sqrt(1.0 - g);
    const Eigen::VectorXd q = transmitted.col("Q"), p = transmitted.col("P");
    const Eigen::VectorXd qe1 = eve.data.col(0) + eve.data.col(1);
    // EPR anticorrelation: Eve's estimate of the injected P has opposite sign.
    const Eigen::VectorXd pe1 = -eve.data.col(2) + eve.data.col(3);

    ClonerRun run;
    run.has_known_part = has_known;
    run.batch.seed = seed;
    run.batch.n0 = n0;
    run.batch.labels = {"Q_B", "P_B", "Q_E2", "P_E2"};
    run.batch.data.resize(transmitted.n(), has_known ? 6 : 4);
    run.batch.data.col(0) = sg * q + sr * qe1;
    run.batch.data.col(1) = sg * p + sr * pe1;
    run.batch.data.col(2) = sg * qe1 - sr * q;
    run.batch.data.col(3) = sg * pe1 - sr * p;
    if (has_known) {
        run.batch.labels.push_back("Q_EK");
        run.batch.labels.push_back("P_EK");
        run.batch.data.col(4) = eve.data.col(0);
        run.batch.data.col(5) = -eve.data.col(2);
    }

    auto est = has_known
                   ? empirical_conditional_variance(run.batch, "Q_B", {"Q_E2", "Q_EK"})
                   : empirical_conditional_variance(run.batch, "Q_B", {"Q_E2"});
    run.empirical_v_qb_given_eve = est.variance;
    run.empirical_stderr = est.stderr_est;
    run.bound_v_qb_given_eve = eve_conditional_variance_bound(ch, v, n0).first;
    return run;
}

} // namespace cvqkd
