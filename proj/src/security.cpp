#include "cvqkd/security.hpp"

#include <cmath>
#include <stdexcept>

namespace cvqkd {

namespace {

double log2_safe(double x) {
    if (x <= 0.0) throw std::domain_error("log2 of a nonpositive quantity");
    return std::log2(x);
}

void check_params(double g, double chi, double v) {
    if (g <= 0.0) throw std::domain_error("gain G must be positive");
    if (chi < 0.0) throw std::domain_error("noise chi must be nonnegative");
    if (v < 1.0) throw std::domain_error("modulation variance V must be >= 1");
}

void check_squeezing(double v, double s) {
    if (s < 1.0 / v - 1e-12 || s > v + 1e-12)
        throw std::domain_error("squeezing s must lie in [1/V, V]");
}

} // namespace

double protocol_squeezing(ProtocolMode mode, double v, double s) {
    switch (mode) {
        case ProtocolMode::coherent: return 1.0;
        case ProtocolMode::epr: return 1.0 / v;
        case ProtocolMode::squeezed: check_squeezing(v, s); return s;
    }
    throw std::invalid_argument("unknown protocol mode");
}

double mutual_info_ba(double g, double chi, double v, double s) {
    check_params(g, chi, v);
    check_squeezing(v, s);
    return 0.5 * log2_safe((v + chi) / (s + chi));
}

double mutual_info_be_rr(double g, double chi, double v) {
    check_params(g, chi, v);
    return 0.5 * log2_safe((g * v + g * chi) * (g * chi + g / v));
}

double delta_i_rr(double g, double chi, double v, double s) {
    check_params(g, chi, v);
    check_squeezing(v, s);
    return 0.5 * log2_safe(1.0 / ((g * chi + g / v) * (g * chi + g * s)));
}

double delta_i_epr(double g, double chi, double v) {
    check_params(g, chi, v);
    return 0.5 * log2_safe(1.0 / (g * chi + g / v));
}

double delta_i_coh(double g, double chi, double v) {
    return delta_i_rr(g, chi, v, 1.0);
}

double epsilon_max_rr(double g, double v, double s) {
    if (g <= 0.0) throw std::domain_error("gain G must be positive");
    if (v < 1.0) throw std::domain_error("modulation variance V must be >= 1");
    check_squeezing(v, s);
    const double d = s - 1.0 / v;
    return 1.0 - 1.0 / v - 1.0 / g - 0.5 * d + std::sqrt(1.0 / (g * g) + 0.25 * d * d);
}

double epsilon_max_coh(double g, double v) {
    return epsilon_max_rr(g, v, 1.0);
}

double dr_threshold(double g) {
    if (g <= 0.0) throw std::domain_error("gain G must be positive");
    return 2.0 - 1.0 / g;
}

SeparabilityVerdict duan_simon_separable(double g, double chi, double v) {
    check_params(g, chi, v);
    const double v_b = g * (v + chi);
    const double c2 = g * (v * v - 1.0);
    const double margin = c2 - (v - 1.0) * (v_b - 1.0);
    return SeparabilityVerdict{!(margin > 0.0), margin};
}

StrongLossRates strong_loss_rates(double g, double v, double eps) {
    if (g <= 0.0) throw std::domain_error("gain G must be positive");
    if (v < 1.0) throw std::domain_error("modulation variance V must be >= 1");
    if (eps < 0.0) throw std::domain_error("excess noise must be nonnegative");
    const double pref = g / (2.0 * std::log(2.0));
    return StrongLossRates{pref * (1.0 - 1.0 / v - eps), pref * (1.0 - 1.0 / v - 2.0 * eps),
                           g > 0.05};
}

BB84Comparison bb84_compare(double g, double nbar) {
    if (g <= 0.0 || g > 1.0) throw std::domain_error("line transmission must lie in (0, 1]");
    if (nbar <= 0.0 || nbar > 1.0)
        throw std::domain_error("mean photon number must lie in (0, 1]");
    return BB84Comparison{nbar, g, 0.5 * g * nbar};
}

double practical_rate(double g, double chi, double v, double s, double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::domain_error("beta must lie in [0, 1]");
    return beta * mutual_info_ba(g, chi, v, s) - mutual_info_be_rr(g, chi, v);
}

double beta_star(double g, double chi, double v, double s) {
    const double i_ba = mutual_info_ba(g, chi, v, s);
    if (i_ba <= 0.0) throw std::domain_error("beta*: I_BA vanishes");
    return mutual_info_be_rr(g, chi, v) / i_ba;
}

bool rr_secure_general(const ChannelModel& ch, double v, double s) {
    check_squeezing(v, s);
    const double qa = ch.g_q * ch.chi_q + ch.g_q * s;
    const double qe = ch.g_q * ch.chi_q + ch.g_q / v;
    const double pa = ch.g_p * ch.chi_p + ch.g_p * s;
    const double pe = ch.g_p * ch.chi_p + ch.g_p / v;
    return qa * pe < 1.0 || pa * qe < 1.0;
}

SecurityReport analyze(const ChannelModel& ch, double v, ProtocolMode mode, double s,
                       std::optional<double> beta) {
    if (!ch.symmetric())
        throw std::invalid_argument("analyze: symmetric channel expected; use rr_secure_general");
    SecurityReport r;
    r.g = ch.g_q;
    r.chi = ch.chi_q;
    r.eps = ch.eps_q();
    r.v = v;
    r.mode = mode;
    r.s = protocol_squeezing(mode, v, s);
    r.basis_sifting_factor = mode == ProtocolMode::epr ? 0.5 : 1.0;
    r.i_ba = mutual_info_ba(r.g, r.chi, v, r.s);
    r.i_be = mutual_info_be_rr(r.g, r.chi, v);
    r.delta_i_rr = r.basis_sifting_factor * delta_i_rr(r.g, r.chi, v, r.s);
    r.eps_max_rr = epsilon_max_rr(r.g, v, r.s);
    r.eps_max_dr = dr_threshold(r.g);
    r.rr_secure = r.delta_i_rr > 0.0;
    r.dr_secure = r.eps < r.eps_max_dr;
    auto verdict = duan_simon_separable(r.g, r.chi, v);
    r.entangled = !verdict.separable;
    r.separability_margin = verdict.margin;
    if (beta) {
        r.beta = beta;
        r.practical = practical_rate(r.g, r.chi, v, r.s, *beta);
        if (r.i_ba > 0.0) r.beta_star_value = beta_star(r.g, r.chi, v, r.s);
    }
    return r;
}

std::string to_string(ProtocolMode mode) {
    switch (mode) {
        case ProtocolMode::coherent: return "coherent";
        case ProtocolMode::squeezed: return "squeezed";
        case ProtocolMode::epr: return "epr";
    }
    return "?";
}

} // namespace cvqkd
