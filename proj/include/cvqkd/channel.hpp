#pragma once

#include "cvqkd/gaussian.hpp"

#include <cstdint>
#include <utility>

namespace cvqkd {

/// Gaussian channel Q_B = sqrt(G_Q)(Q + dQ), <dQ^2> = chi_Q * n0, noise drawn
/// independently of the signal. chi decomposes as chi0 + eps with
/// chi0 = (1-G)/G the loss-induced vacuum noise; eps < 0 is rejected as
/// unphysical for lossy lines.
struct ChannelModel {
    double g_q = 1.0;
    double g_p = 1.0;
    double chi_q = 0.0;
    double chi_p = 0.0;

    ChannelModel() = default;
    ChannelModel(double g_q_in, double g_p_in, double chi_q_in, double chi_p_in);

    /// Symmetric channel from gain and excess noise: chi = (1-g)/g + eps.
    static ChannelModel from_gain_excess(double g, double eps);
    /// Symmetric channel from losses in dB: g = 10^(-db/10).
    static ChannelModel from_loss_db(double loss_db, double eps);

    bool symmetric() const;
    double vacuum_chi_q() const { return (1.0 - g_q) / g_q; }
    double vacuum_chi_p() const { return (1.0 - g_p) / g_p; }
    double eps_q() const { return chi_q - vacuum_chi_q(); }
    double eps_p() const { return chi_p - vacuum_chi_p(); }

    /// Composition: this channel applied after `inner`.
    ChannelModel after(const ChannelModel& inner) const;
};

double loss_db_to_gain(double loss_db);
double gain_to_loss_db(double g);

/// Push transmitted (Q, P) samples through the channel, adding fresh seeded
/// noise. Output columns are Q_B, P_B; any other columns pass through.
SampleBatch propagate(const ChannelModel& ch, const SampleBatch& transmitted, std::uint64_t seed,
                      unsigned threads = 1);

/// Analytic counterpart of propagate for ensembles containing (Q, P): the
/// labels become (Q_B, P_B); cross covariances with spectator variables scale
/// by sqrt(G).
GaussianEnsemble propagate_ensemble(const ChannelModel& ch, const GaussianEnsemble& e);

/// Alice's conditional variances on Bob's quadratures for black-box squeezing s:
/// (G_Q (chi_Q + s) n0, G_P (chi_P + 1/s) n0). Requires 1/V <= s <= V.
std::pair<double, double> alice_conditional_variance(const ChannelModel& ch, double v, double s,
                                                     double n0 = 1.0);

/// Heisenberg lower bounds on Eve's conditional variances:
/// V_{Q_B|Q_E,min} = n0 / (G_P (chi_P + 1/V)) and the Q/P-swapped partner.
/// A vanishing denominator maps to +infinity (Eve knows nothing).
std::pair<double, double> eve_conditional_variance_bound(const ChannelModel& ch, double v,
                                                         double n0 = 1.0);

/// Minimal conditional variances on both sides, in n0 units times n0.
struct AttackBound {
    double v_b_given_a_q;     // G_Q (chi_Q + 1/V) n0
    double v_b_given_a_p;     // G_P (chi_P + 1/V) n0
    double v_b_given_e_q_min; // n0 / (G_P (chi_P + 1/V))
    double v_b_given_e_p_min; // n0 / (G_Q (chi_Q + 1/V))
};
AttackBound attack_bound(const ChannelModel& ch, double v, double n0 = 1.0);

/// Result of simulating the beamsplitter entangling cloner. Bob and Eve
/// columns live in `batch`; `eve_given` names the columns Eve conditions on
/// for the Q quadrature.
struct ClonerRun {
    SampleBatch batch;     // Q_B, P_B, Q_E2, P_E2 [, Q_EK, P_EK]
    bool has_known_part = false;
    double empirical_v_qb_given_eve = 0.0;
    double empirical_stderr = 0.0;
    double bound_v_qb_given_eve = 0.0; // analytic target n0/(G chi + G/V)
};

/// Eve's explicit attack for a symmetric lossy channel (0 < G < 1): a
/// beamsplitter of transmission G injecting one half of an EPR pair of
/// variance W = G chi n0/(1-G). Eve's knowledge of the injected field has
/// variance W - n0^2/W (zero when W <= n0, the eps = 0 vacuum case). Her
/// record reaches V_{Q_B|E} = n0/(G chi + G/V).
ClonerRun entangling_cloner_simulate(const ChannelModel& ch, double v,
                                     const SampleBatch& transmitted, std::uint64_t seed,
                                     unsigned threads = 1);

} // namespace cvqkd
