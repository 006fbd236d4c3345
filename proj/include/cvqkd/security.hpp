#pragma once

#include "cvqkd/channel.hpp"

#include <optional>
#include <string>

namespace cvqkd {

enum class ProtocolMode { coherent, squeezed, epr };

/// Squeezing implied by a protocol choice: 1 for coherent, 1/V for EPR
/// (single-quadrature), the given s for squeezed.
double protocol_squeezing(ProtocolMode mode, double v, double s = 1.0);

/// All quantities below use base-2 logarithms (bits) and a symmetric channel
/// (G, chi) unless stated otherwise.

/// I_BA = 1/2 log2((V + chi)/(s + chi)).
double mutual_info_ba(double g, double chi, double v, double s);

/// I_BE = 1/2 log2[(G V + G chi)(G chi + G/V)], Eve saturating her bound.
double mutual_info_be_rr(double g, double chi, double v);

/// Delta I = I_BA - I_BE = 1/2 log2[1/((G chi + G/V)(G chi + G s))].
double delta_i_rr(double g, double chi, double v, double s);

/// Single-quadrature (EPR) rate including the basis-sifting factor 1/2:
/// 1/2 log2[1/(G chi + G/V)].
double delta_i_epr(double g, double chi, double v);

/// Coherent-state rate, s = 1; equals delta_i_epr - 1/2 log2(1 + G eps).
double delta_i_coh(double g, double chi, double v);

/// Largest excess noise with a positive RR rate:
/// eps_max = 1 - 1/V - 1/G - (s - 1/V)/2 + sqrt(1/G^2 + (s - 1/V)^2/4).
double epsilon_max_rr(double g, double v, double s);

/// epsilon_max_rr at s = 1.
double epsilon_max_coh(double g, double v);

/// DR security threshold: eps < 2 - 1/G (chi < 1).
double dr_threshold(double g);

/// Duan-Simon separability of the (virtually) entangled Alice-Bob state.
/// margin = C^2 - (V-1)(V_B-1) with V_B = G(V+chi), C = sqrt(G(V^2-1));
/// entangled iff margin > 0, which reduces to eps < 2.
struct SeparabilityVerdict {
    bool separable = true;
    double margin = 0.0;
};
SeparabilityVerdict duan_simon_separable(double g, double chi, double v);

/// Strong-loss (G << 1) approximations:
/// (G/2ln2)(1 - 1/V - eps) for EPR, (G/2ln2)(1 - 1/V - 2 eps) for coherent.
struct StrongLossRates {
    double delta_i_epr_approx;
    double delta_i_coh_approx;
    bool outside_recommended_range = false; // g > 0.05
};
StrongLossRates strong_loss_rates(double g, double v, double eps);

/// BB84 net key rate over a lossy errorless line: G nbar / 2.
struct BB84Comparison {
    double nbar;
    double g;
    double rate;
};
BB84Comparison bb84_compare(double g, double nbar);

/// Secret rate with a reconciliation efficiency beta: beta * I_BA - I_BE.
double practical_rate(double g, double chi, double v, double s, double beta);

/// Efficiency beta* at which the practical rate crosses zero: I_BE / I_BA.
double beta_star(double g, double chi, double v, double s);

/// Generalized RR security condition for possibly asymmetric channels:
/// secure if either Q/P ordering of (G chi + G s)(G chi + G/V) < 1 passes.
bool rr_secure_general(const ChannelModel& ch, double v, double s);

struct SecurityReport {
    double g = 1.0;
    double chi = 0.0;
    double eps = 0.0;
    double v = 1.0;
    double s = 1.0;
    ProtocolMode mode = ProtocolMode::coherent;
    double basis_sifting_factor = 1.0;
    double i_ba = 0.0;
    double i_be = 0.0;
    double delta_i_rr = 0.0; // sifting factor applied
    double eps_max_rr = 0.0;
    double eps_max_dr = 0.0;
    bool rr_secure = false;
    bool dr_secure = false;
    bool entangled = false;
    double separability_margin = 0.0;
    std::optional<double> beta{};
    std::optional<double> practical{};
    std::optional<double> beta_star_value{};
};

/// Assemble the full report for a symmetric channel and protocol choice.
SecurityReport analyze(const ChannelModel& ch, double v, ProtocolMode mode, double s = 1.0,
                       std::optional<double> beta = std::nullopt);

std::string to_string(ProtocolMode mode);

} // namespace cvqkd
