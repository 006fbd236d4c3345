#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cvqkd {

enum class Direction { dr, rr };

std::string to_string(Direction d);

/// Channel parameters recovered from a publicly revealed sample of symbols.
/// g from the squared regression slope of Bob's on Alice's values; chi from
/// the residual variance over g*n0, minus the known preparation noise s.
struct ChannelEstimate {
    double g_hat = 1.0;
    double chi_hat = 0.0;
    double slope = 1.0;      // regression of bob on alice
    double slope_ba = 1.0;   // regression of alice on bob
    double g_se = 0.0;
    double chi_se = 0.0;
    double g_ci_low = 0.0, g_ci_high = 0.0;     // 95% interval
    double chi_ci_low = 0.0, chi_ci_high = 0.0; // 95% interval
    double sacrificed_fraction = 0.0;
    std::vector<std::uint32_t> indices; // publicly chosen sacrificed symbols
    bool low_precision = false;
};

/// Pick floor(fraction*n) symbols by seeded public coin and regress.
/// `prep_noise_s` is the public preparation noise entering the residual
/// (s for the transmitted squeezing; 0 when the inputs are raw beam values).
ChannelEstimate estimate_channel(std::span<const double> alice, std::span<const double> bob,
                                 double fraction, std::uint64_t seed, double n0 = 1.0,
                                 double prep_noise_s = 0.0);

/// m-bit Gray code of x (x < 2^m).
std::uint8_t gray_encode(std::uint8_t x);

/// 2^m - 1 monotone bin boundaries at the empirical quantiles of `values`.
std::vector<double> quantile_boundaries(std::span<const double> values, int m);

/// Per-symbol m-bit Gray-coded label of the quantile bin of each value.
std::vector<std::uint8_t> slice(std::span<const double> values, int m,
                                std::span<const double> boundaries);

/// One classical message of the interactive correction protocol. Every
/// record carries `bits` payload bits; block indices refer to positions in
/// the (public) per-pass shuffle.
struct ParityRecord {
    int round = 0;
    std::string direction; // "B->A" or "A->B"
    int level = 0;
    std::string kind; // parity | bitmap | direction | reveal | hash
    std::uint32_t lo = 0, hi = 0;
    int parity = 0;
    std::uint64_t bits = 1;
    std::uint64_t value = 0; // hash records only
};

struct CorrectionResult {
    std::vector<std::uint8_t> corrected; // corrector-side codes after reconciliation
    /// Key-describing payload published by the reference side (block parities,
    /// plane reveals, verification hashes); this is what privacy amplification
    /// is charged with.
    std::uint64_t disclosed_bits = 0;
    /// Feedback sent by the correcting side (mismatch bitmaps, bisection
    /// direction bits); reported for auditing.
    std::uint64_t corrector_flow_bits = 0;
    bool converged = false;
    std::vector<double> plane_error_estimates;
    std::vector<bool> plane_revealed;
    std::vector<ParityRecord> log;
};

/// Corrector-side refresh of one bit plane, produced just before that plane
/// is reconciled. `bits` replaces the corrector's current guess; `request`
/// (empty or one flag per symbol) marks positions whose posterior is too
/// ambiguous to guess, which the reference then reveals directly; `prior` is
/// the expected error rate among the remaining positions (negative = unknown).
struct PlaneAdvice {
    std::vector<std::uint8_t> bits;
    std::vector<std::uint8_t> request;
    double prior = -1.0;
};

/// Callback invoked per plane with the corrector's current codewords (planes
/// already processed hold the reference's bits) and the mask of finished
/// planes. Lets the corrector re-estimate a plane from her analog values plus
/// everything already reconciled (multistage decoding).
using PlaneAdvisor =
    std::function<PlaneAdvice(int level, std::span<const std::uint8_t> current_codes,
                              unsigned done_mask)>;

/// Interactive parity reconciliation of m-bit codewords, one bit plane at a
/// time: shuffled parity-block passes with doubling block sizes, binary-search
/// location of odd errors, and cascade re-checks of earlier passes after every
/// fix. Planes whose estimated error rate makes parity exchange wasteful are
/// revealed outright. In RR Bob's codes are the fixed reference and Alice's
/// are corrected; DR is the mirror image.
CorrectionResult correct(Direction dir, std::span<const std::uint8_t> alice_codes,
                         std::span<const std::uint8_t> bob_codes, int m, int rounds,
                         std::uint64_t seed,
                         std::span<const double> plane_error_priors = {},
                         bool keep_log = true, const PlaneAdvisor& advisor = {});

/// FNV-1a over a bit vector; the published verification hash.
std::uint64_t hash_bits(std::span<const std::uint8_t> bits);

struct PrivacyResult {
    std::vector<std::uint8_t> key;
    std::size_t target_bits = 0;
    bool aborted = false;
};

/// Compress to floor(input_bits - eve_info_bits - margin_bits) bits with a
/// seeded binary Toeplitz matrix; aborts when the target is nonpositive.
PrivacyResult privacy_amplify(std::span<const std::uint8_t> bits, double eve_info_bits,
                              std::size_t margin_bits, std::uint64_t seed);

enum class SessionStatus { success, abort_insecure, abort_residual_mismatch, abort_no_key };

std::string to_string(SessionStatus s);

struct DistillConfig {
    Direction direction = Direction::rr;
    int m = 4;
    int rounds = 8;
    std::size_t margin_bits = 64;
    double sacrificed_fraction = 0.1;
    std::uint64_t seed = 1;
    double v = 10.0;  // public modulation variance
    double s = 1.0;   // public transmitted squeezing
    double n0 = 1.0;
    bool keep_log = true;
};

struct KeySession {
    Direction direction = Direction::rr;
    SessionStatus status = SessionStatus::success;
    std::vector<double> alice_values, bob_values; // retained symbols
    std::vector<std::uint8_t> reference_slices;   // the key holder's codewords
    std::vector<std::uint8_t> corrected_slices;   // corrector's codes after reconciliation
    ChannelEstimate estimate{};
    double i_ba = 0.0, i_be = 0.0, delta_i = 0.0; // at the channel estimate
    std::uint64_t disclosed_bits = 0;
    std::uint64_t corrector_flow_bits = 0;
    double beta_achieved = 0.0;
    std::vector<std::uint8_t> final_key_a, final_key_b;
    std::size_t key_length = 0;
    int m = 4;
    std::size_t margin_bits = 64;
    std::vector<ParityRecord> message_log;
};

/// Full pipeline: estimate -> gate -> slice -> correct -> verify -> compress.
/// `alice_values` and `bob_values` are the correlated key elements of one
/// quadrature (Alice's modulation and Bob's homodyne results).
KeySession distill(std::span<const double> alice_values, std::span<const double> bob_values,
                   const DistillConfig& cfg);

/// Serialize the message log as line-delimited JSON records.
std::string message_log_to_jsonl(std::span<const ParityRecord> log);

} // namespace cvqkd
