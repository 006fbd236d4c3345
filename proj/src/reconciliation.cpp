#include "cvqkd/reconciliation.hpp"
#include "cvqkd/rng.hpp"
#include "cvqkd/security.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cvqkd {

namespace {

constexpr std::uint64_t kSelectStream = 0x5E1ECCULL;
constexpr std::uint64_t kCascadeStream = 0xCA5CADULL;
constexpr std::uint64_t kToeplitzStream = 0x70E911ULL;
constexpr std::uint64_t kHashBits = 64;

/// Error rate above which publishing the whole plane beats parity exchange.
constexpr double kRevealThreshold = 0.24;

double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

std::size_t block_size_for(double p, std::size_t n) {
    const std::size_t cap = std::max<std::size_t>(n / 4, 4);
    if (p <= 0.0) return cap;
    const double raw = 0.73 / p;
    if (raw >= static_cast<double>(cap)) return cap;
    return std::max<std::size_t>(4, static_cast<std::size_t>(std::lround(raw)));
}

/// Invert the block-parity mismatch fraction f at block size b to a bit error
/// rate: f = (1 - (1-2p)^b)/2.
double error_rate_from_mismatch(double f, std::size_t b) {
    if (f <= 0.0) return 0.0;
    if (f >= 0.5) return 0.5;
    const double base = 1.0 - 2.0 * f;
    return 0.5 * (1.0 - std::pow(base, 1.0 / static_cast<double>(b)));
}

} // namespace

std::string to_string(Direction d) { return d == Direction::rr ? "RR" : "DR"; }

std::string to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::success: return "success";
        case SessionStatus::abort_insecure: return "abort_insecure";
        case SessionStatus::abort_residual_mismatch: return "abort_residual_mismatch";
        case SessionStatus::abort_no_key: return "abort_no_key";
    }
    return "?";
}

ChannelEstimate estimate_channel(std::span<const double> alice, std::span<const double> bob,
                                 double fraction, std::uint64_t seed, double n0,
                                 double prep_noise_s) {
    if (alice.size() != bob.size()) throw std::invalid_argument("estimate_channel: size mismatch");
    if (fraction <= 0.0 || fraction > 0.5)
        throw std::invalid_argument("estimate_channel: fraction must lie in (0, 0.5]");
    const std::size_t n = alice.size();
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (k < 4) throw std::invalid_argument("estimate_channel: sacrificed sample too small");

    // Public coin: partial Fisher-Yates over the symbol indices.
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(derive_stream(seed, kSelectStream));
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - i));
        std::swap(order[i], order[std::min(j, n - 1)]);
    }
    ChannelEstimate est;
    est.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(est.indices.begin(), est.indices.end());
    est.sacrificed_fraction = fraction;

    double saa = 0.0, sab = 0.0, sbb = 0.0;
    for (auto idx : est.indices) {
        const double a = alice[idx], b = bob[idx];
        saa += a * a;
        sab += a * b;
        sbb += b * b;
    }
    if (saa <= 0.0) throw std::domain_error("estimate_channel: degenerate alice values");
    est.slope = sab / saa;
    est.slope_ba = sbb > 0.0 ? sab / sbb : 0.0;
    est.g_hat = est.slope * est.slope;

    const double dof = static_cast<double>(k - 1);
    const double resid_var = std::max((sbb - est.slope * sab) / dof, 0.0);
    const double chi_raw = est.g_hat > 0.0 ? resid_var / (est.g_hat * n0) : 0.0;
    est.chi_hat = std::max(chi_raw - prep_noise_s, 0.0);

    const double se_slope = std::sqrt(resid_var / saa);
    est.g_se = 2.0 * std::abs(est.slope) * se_slope;
    const double se_resid = resid_var * std::sqrt(2.0 / dof);
    if (est.g_hat > 0.0) {
        const double d_rv = se_resid / (est.g_hat * n0);
        const double d_g = chi_raw * est.g_se / est.g_hat;
        est.chi_se = std::sqrt(d_rv * d_rv + d_g * d_g);
    }
    est.g_ci_low = est.g_hat - 1.96 * est.g_se;
    est.g_ci_high = est.g_hat + 1.96 * est.g_se;
    est.chi_ci_low = est.chi_hat - 1.96 * est.chi_se;
    est.chi_ci_high = est.chi_hat + 1.96 * est.chi_se;
    est.low_precision = k < 30 || est.chi_se > 0.25;
    return est;
}

std::uint8_t gray_encode(std::uint8_t x) { return static_cast<std::uint8_t>(x ^ (x >> 1)); }

std::vector<double> quantile_boundaries(std::span<const double> values, int m) {
    if (m < 1 || m > 8) throw std::invalid_argument("slice count m must lie in [1, 8]");
    if (values.size() < (1u << m)) throw std::invalid_argument("too few values for 2^m bins");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t bins = 1u << m;
    std::vector<double> bounds;
    bounds.reserve(bins - 1);
    for (std::size_t b = 1; b < bins; ++b) {
        const std::size_t pos = b * sorted.size() / bins;
        bounds.push_back(sorted[pos]);
    }
    return bounds;
}

std::vector<std::uint8_t> slice(std::span<const double> values, int m,
                                std::span<const double> boundaries) {
    if (m < 1 || m > 8) throw std::invalid_argument("slice count m must lie in [1, 8]");
    if (boundaries.size() + 1 != (1u << m))
        throw std::invalid_argument("slice: need 2^m - 1 boundaries");
    if (!std::is_sorted(boundaries.begin(), boundaries.end()))
        throw std::invalid_argument("slice: boundaries must be monotone");
    std::vector<std::uint8_t> codes(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bin = static_cast<std::uint8_t>(
            std::upper_bound(boundaries.begin(), boundaries.end(), values[i]) -
            boundaries.begin());
        codes[i] = gray_encode(bin);
    }
    return codes;
}

std::uint64_t hash_bits(std::span<const std::uint8_t> bits) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t x) {
        h ^= x;
        h *= 1099511628211ULL;
    };
    mix(bits.size());
    std::uint64_t word = 0;
    std::size_t fill = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        word |= static_cast<std::uint64_t>(bits[i] & 1u) << fill;
        if (++fill == 64) {
            mix(word);
            word = 0;
            fill = 0;
        }
    }
    if (fill) mix(word);
    return h;
}

namespace {

/// One bit plane of the interactive correction. The reference side's bits are
/// immutable; the corrector's converge toward them. All published messages are
/// appended to the shared log and the two payload counters.
class PlaneCascade {
public:
    PlaneCascade(std::span<const std::uint8_t> ref, std::vector<std::uint8_t>& corr, int level,
                 std::uint64_t seed, const std::string& ref_dir, const std::string& flow_dir,
                 CorrectionResult& result, bool keep_log)
        : ref_(ref), corr_(corr), n_(ref.size()), level_(level), seed_(seed), ref_dir_(ref_dir),
          flow_dir_(flow_dir), result_(result), keep_log_(keep_log) {}

    /// True once the plane hash verifies.
    bool reconcile(int rounds, double prior) {
        const std::uint64_t ref_hash = hash_bits(ref_);
        publish_ref("hash", 0, static_cast<std::uint32_t>(n_), 0, kHashBits, ref_hash);
        if (hash_bits(corr_) == ref_hash) {
            estimate_ = 0.0;
            return true;
        }

        double p = prior;
        if (p >= 0.0 && p >= kRevealThreshold) {
            reveal();
            return true;
        }
        int pass = 0;
        std::size_t bsize = p >= 0.0 ? block_size_for(p, n_) : 64;
        bsize = std::min(bsize, n_);
        while (pass < rounds) {
            run_pass(pass, bsize);
            if (hash_bits(corr_) == ref_hash) return true;
            if (pass == 0) {
                estimate_ = error_rate_from_mismatch(first_pass_mismatch_, passes_[0].bsize);
                if (prior < 0.0) {
                    if (estimate_ >= kRevealThreshold) {
                        reveal();
                        return true;
                    }
                    bsize = block_size_for(std::max(estimate_, 0.5 / static_cast<double>(n_)), n_);
                    bsize = std::min(bsize, n_);
                    ++pass;
                    continue;
                }
            }
            bsize = std::min(bsize * 2, n_);
            ++pass;
        }
        return hash_bits(corr_) == ref_hash;
    }

    double estimate() const { return estimate_; }
    bool revealed() const { return revealed_; }

private:
    struct Pass {
        std::vector<std::uint32_t> perm;   // permuted position -> original index
        std::vector<std::uint32_t> invpos; // original index -> permuted position
        std::size_t bsize = 0;
        std::vector<std::uint8_t> diff;    // block parity mismatch flags
    };

    void log_record(const std::string& dir, const std::string& kind, std::uint32_t lo,
                    std::uint32_t hi, int parity, std::uint64_t bits, std::uint64_t value) {
        if (!keep_log_) return;
        result_.log.push_back(ParityRecord{round_counter_, dir, level_, kind, lo, hi, parity,
                                           bits, value});
    }

    void publish_ref(const std::string& kind, std::uint32_t lo, std::uint32_t hi, int parity,
                     std::uint64_t bits, std::uint64_t value = 0) {
        result_.disclosed_bits += bits;
        log_record(ref_dir_, kind, lo, hi, parity, bits, value);
    }

    void publish_flow(const std::string& kind, std::uint32_t lo, std::uint32_t hi, int parity,
                      std::uint64_t bits) {
        result_.corrector_flow_bits += bits;
        log_record(flow_dir_, kind, lo, hi, parity, bits, 0);
    }

    void reveal() {
        publish_ref("reveal", 0, static_cast<std::uint32_t>(n_), 0, n_);
        corr_.assign(ref_.begin(), ref_.end());
        revealed_ = true;
        result_.plane_revealed[static_cast<std::size_t>(level_)] = true;
    }

    int ref_parity(const Pass& pass, std::size_t lo, std::size_t hi) const {
        int par = 0;
        for (std::size_t i = lo; i < hi; ++i) par ^= ref_[pass.perm[i]];
        return par;
    }

    int corr_parity(const Pass& pass, std::size_t lo, std::size_t hi) const {
        int par = 0;
        for (std::size_t i = lo; i < hi; ++i) par ^= corr_[pass.perm[i]];
        return par;
    }

    void run_pass(int pass_idx, std::size_t bsize) {
        round_counter_ = pass_idx;
        Pass pass;
        pass.bsize = bsize;
        pass.perm.resize(n_);
        std::iota(pass.perm.begin(), pass.perm.end(), 0u);
        Rng rng(derive_stream(seed_, static_cast<std::uint64_t>(pass_idx) + 1));
        for (std::size_t i = n_; i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
            std::swap(pass.perm[i - 1], pass.perm[std::min(j, i - 1)]);
        }
        pass.invpos.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) pass.invpos[pass.perm[i]] = static_cast<std::uint32_t>(i);

        const std::size_t nblocks = (n_ + bsize - 1) / bsize;
        pass.diff.assign(nblocks, 0);
        std::size_t mismatched = 0;
        for (std::size_t b = 0; b < nblocks; ++b) {
            const std::size_t lo = b * bsize, hi = std::min(n_, lo + bsize);
            const int rp = ref_parity(pass, lo, hi);
            publish_ref("parity", static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(hi),
                        rp, 1);
            if (rp != corr_parity(pass, lo, hi)) {
                pass.diff[b] = 1;
                ++mismatched;
            }
        }
        // The corrector's mismatch bitmap tells the reference which blocks to open.
        publish_flow("bitmap", 0, static_cast<std::uint32_t>(n_), 0, nblocks);
        if (pass_idx == 0)
            first_pass_mismatch_ = static_cast<double>(mismatched) / static_cast<double>(nblocks);

        passes_.push_back(std::move(pass));
        const std::size_t p = passes_.size() - 1;
        for (std::size_t b = 0; b < nblocks; ++b)
            if (passes_[p].diff[b]) queue_.emplace_back(p, b);
        drain();
    }

    void drain() {
        while (!queue_.empty()) {
            auto [p, b] = queue_.front();
            queue_.pop_front();
            if (!passes_[p].diff[b]) continue; // toggled back before processing
            const std::uint32_t fixed = bisect(passes_[p], b);
            corr_[fixed] ^= 1u;
            for (std::size_t q = 0; q < passes_.size(); ++q) {
                const std::size_t blk = passes_[q].invpos[fixed] / passes_[q].bsize;
                passes_[q].diff[blk] ^= 1u;
                if (passes_[q].diff[blk]) queue_.emplace_back(q, blk);
            }
        }
    }

    /// Locate one differing bit in a parity-mismatched block; returns its
    /// original index. The reference publishes the left-half parity at each
    /// step, the corrector answers with the direction to descend.
    std::uint32_t bisect(const Pass& pass, std::size_t block) {
        std::size_t lo = block * pass.bsize;
        std::size_t hi = std::min(n_, lo + pass.bsize);
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo) / 2;
            const int rp = ref_parity(pass, lo, mid);
            publish_ref("parity", static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(mid),
                        rp, 1);
            const bool left = rp != corr_parity(pass, lo, mid);
            publish_flow("direction", static_cast<std::uint32_t>(lo),
                         static_cast<std::uint32_t>(mid), left ? 1 : 0, 1);
            if (left)
                hi = mid;
            else
                lo = mid;
        }
        return pass.perm[lo];
    }

    std::span<const std::uint8_t> ref_;
    std::vector<std::uint8_t>& corr_;
    std::size_t n_;
    int level_;
    std::uint64_t seed_;
    std::string ref_dir_, flow_dir_;
    CorrectionResult& result_;
    bool keep_log_;
    std::vector<Pass> passes_;
    std::deque<std::pair<std::size_t, std::size_t>> queue_;
    double first_pass_mismatch_ = 0.0;
    double estimate_ = -1.0;
    bool revealed_ = false;
    int round_counter_ = 0;
};

} // namespace

CorrectionResult correct(Direction dir, std::span<const std::uint8_t> alice_codes,
                         std::span<const std::uint8_t> bob_codes, int m, int rounds,
                         std::uint64_t seed, std::span<const double> plane_error_priors,
                         bool keep_log, const PlaneAdvisor& advisor) {
    if (alice_codes.size() != bob_codes.size())
        throw std::invalid_argument("correct: code vectors must have equal length");
    if (m < 1 || m > 8) throw std::invalid_argument("slice count m must lie in [1, 8]");
    if (rounds < 1) throw std::invalid_argument("correct: need rounds >= 1");
    const std::size_t n = alice_codes.size();
    if (n == 0) throw std::invalid_argument("correct: empty session");

    const bool rr = dir == Direction::rr;
    std::span<const std::uint8_t> ref = rr ? bob_codes : alice_codes;
    std::vector<std::uint8_t> corrected(rr ? alice_codes.begin() : bob_codes.begin(),
                                        rr ? alice_codes.end() : bob_codes.end());
    const std::string ref_dir = rr ? "B->A" : "A->B";
    const std::string flow_dir = rr ? "A->B" : "B->A";

    CorrectionResult result;
    result.plane_error_estimates.assign(static_cast<std::size_t>(m), 0.0);
    result.plane_revealed.assign(static_cast<std::size_t>(m), false);
    result.converged = true;

    unsigned done_mask = 0;
    std::vector<std::uint8_t> ref_plane(n), corr_plane(n);
    for (int level = 0; level < m; ++level) {
        for (std::size_t i = 0; i < n; ++i) ref_plane[i] = (ref[i] >> level) & 1u;
        double prior = static_cast<std::size_t>(level) < plane_error_priors.size()
                           ? plane_error_priors[static_cast<std::size_t>(level)]
                           : -1.0;
        if (advisor) {
            PlaneAdvice advice = advisor(level, corrected, done_mask);
            if (advice.bits.size() != n)
                throw std::invalid_argument("plane advisor returned a wrong-sized plane");
            corr_plane = std::move(advice.bits);
            if (advice.prior >= 0.0) prior = advice.prior;
            if (!advice.request.empty()) {
                if (advice.request.size() != n)
                    throw std::invalid_argument("plane advisor returned a wrong-sized request");
                std::uint64_t count = 0;
                for (std::size_t i = 0; i < n; ++i) count += advice.request[i] ? 1 : 0;
                if (count > 0) {
                    // The corrector asks for her ambiguous positions; the
                    // reference answers with those plane bits.
                    result.corrector_flow_bits += n;
                    if (keep_log)
                        result.log.push_back(ParityRecord{-1, flow_dir, level, "bitmap", 0,
                                                          static_cast<std::uint32_t>(n), 0, n, 0});
                    result.disclosed_bits += count;
                    if (keep_log)
                        result.log.push_back(ParityRecord{-1, ref_dir, level, "reveal", 0,
                                                          static_cast<std::uint32_t>(n), 0, count,
                                                          0});
                    for (std::size_t i = 0; i < n; ++i)
                        if (advice.request[i]) corr_plane[i] = ref_plane[i];
                }
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) corr_plane[i] = (corrected[i] >> level) & 1u;
        }
        PlaneCascade cascade(ref_plane, corr_plane, level,
                             derive_stream(seed, static_cast<std::uint64_t>(level) + 1), ref_dir,
                             flow_dir, result, keep_log);
        const bool ok = cascade.reconcile(rounds, prior);
        result.plane_error_estimates[static_cast<std::size_t>(level)] =
            std::max(cascade.estimate(), prior >= 0.0 ? prior : 0.0);
        result.converged = result.converged && ok;
        if (ok) done_mask |= 1u << level;
        for (std::size_t i = 0; i < n; ++i) {
            corrected[i] = static_cast<std::uint8_t>(
                (corrected[i] & ~(1u << level)) | (static_cast<unsigned>(corr_plane[i]) << level));
        }
    }
    result.corrected = std::move(corrected);
    return result;
}

PrivacyResult privacy_amplify(std::span<const std::uint8_t> bits, double eve_info_bits,
                              std::size_t margin_bits, std::uint64_t seed) {
    PrivacyResult out;
    if (eve_info_bits < 0.0) throw std::invalid_argument("privacy_amplify: negative eve_info_bits");
    const double target = static_cast<double>(bits.size()) - eve_info_bits -
                          static_cast<double>(margin_bits);
    if (target < 1.0) {
        out.aborted = true;
        return out;
    }
    const auto klen = static_cast<std::size_t>(std::floor(target));
    out.target_bits = klen;
    const std::size_t len = bits.size();

    // Pack the input LSB-first into words.
    std::vector<std::uint64_t> x((len + 63) / 64, 0);
    for (std::size_t i = 0; i < len; ++i)
        if (bits[i] & 1u) x[i / 64] |= 1ULL << (i % 64);

    // Seeded diagonal-constant binary matrix, klen x len: row i uses t[i..i+len).
    const std::size_t tbits = klen + len - 1;
    std::vector<std::uint64_t> t(tbits / 64 + 2, 0);
    Rng rng(derive_stream(seed, kToeplitzStream));
    for (auto& w : t) w = rng.next_u64();

    auto t_window = [&t](std::size_t bit_offset) {
        const std::size_t w = bit_offset / 64, off = bit_offset % 64;
        if (off == 0) return t[w];
        return (t[w] >> off) | (t[w + 1] << (64 - off));
    };

    out.key.resize(klen);
    for (std::size_t i = 0; i < klen; ++i) {
        std::uint64_t acc = 0;
        for (std::size_t w = 0; w < x.size(); ++w) acc ^= t_window(i + 64 * w) & x[w];
        // Bits past len in the last window are zero in x, so no masking needed.
        out.key[i] = static_cast<std::uint8_t>(__builtin_popcountll(acc) & 1);
    }
    return out;
}

namespace {

std::vector<std::uint8_t> codes_to_bits(std::span<const std::uint8_t> codes, int m) {
    std::vector<std::uint8_t> bits;
    bits.reserve(codes.size() * static_cast<std::size_t>(m));
    for (auto c : codes)
        for (int level = 0; level < m; ++level) bits.push_back((c >> level) & 1u);
    return bits;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

/// Corrector-side multistage decoder. For every symbol it holds a Gaussian
/// posterior over the reference's bin (centred on the conditional mean of the
/// reference value) and re-estimates each bit plane given the planes already
/// reconciled. Priors are calibrated on the public sacrificed sample, where
/// the reference's codes are known outright.
class BayesianReslicer {
public:
    BayesianReslicer(std::vector<double> pred_means, double resid_var,
                     std::vector<double> boundaries, int m, std::vector<double> sac_means,
                     std::vector<std::uint8_t> sac_codes)
        : means_(std::move(pred_means)), boundaries_(std::move(boundaries)), m_(m),
          sac_means_(std::move(sac_means)), sac_codes_(std::move(sac_codes)) {
        sigma_ = std::sqrt(std::max(resid_var, 1e-12));
        const std::size_t bins = 1u << m_;
        gray_of_bin_.resize(bins);
        for (std::size_t b = 0; b < bins; ++b)
            gray_of_bin_[b] = gray_encode(static_cast<std::uint8_t>(b));
    }

    PlaneAdvice operator()(int level, std::span<const std::uint8_t> current,
                           unsigned done_mask) const {
        PlaneAdvice advice;
        std::vector<double> err;
        advice.bits = map_bits(means_, current, done_mask, level, &err);
        if (sac_codes_.empty()) return advice;

        // Calibrate on the sacrificed sample, where the reference codes are
        // public: pick the ambiguity threshold that minimizes revealed bits
        // plus the parity cost of the residual errors.
        std::vector<double> sac_err;
        auto sac_bits = map_bits(sac_means_, sac_codes_, done_mask, level, &sac_err);
        std::vector<std::uint8_t> sac_wrong(sac_bits.size());
        for (std::size_t i = 0; i < sac_bits.size(); ++i)
            sac_wrong[i] = sac_bits[i] != ((sac_codes_[i] >> level) & 1u);

        const double cascade_factor = 1.35;
        static constexpr double kThresholds[] = {0.5,   0.4,  0.3,  0.25, 0.2,   0.15,
                                                 0.12,  0.08, 0.05, 0.03, 0.02,  0.012,
                                                 0.008, 0.005, 0.003, 0.002, 0.001};
        // Baseline: reveal the whole plane at exactly one bit per symbol.
        // An adaptive plan must beat that to be worth its calibration risk.
        double best_cost = 0.999;
        double best_tau = -1.0;
        double best_density = 0.0;
        const double total = static_cast<double>(sac_bits.size());
        for (double tau : kThresholds) {
            std::size_t requested = 0, residual_errors = 0;
            for (std::size_t i = 0; i < sac_bits.size(); ++i) {
                if (sac_err[i] > tau)
                    ++requested;
                else
                    residual_errors += sac_wrong[i];
            }
            const double kept = total - static_cast<double>(requested);
            if (kept <= 0.0) continue;
            const double p_kept = static_cast<double>(residual_errors) / kept;
            if (p_kept >= kRevealThreshold) continue;
            // Residual error density over the full plane (the unit the parity
            // passes work in), with a calibration upper confidence bound.
            double density = static_cast<double>(residual_errors) / total;
            density = std::min(
                0.5, density + 2.0 * std::sqrt(std::max(density, 1.0 / total) / total));
            const double frac_req = static_cast<double>(requested) / total;
            const double cost = frac_req + cascade_factor * binary_entropy(density);
            if (cost < best_cost) {
                best_cost = cost;
                best_tau = tau;
                best_density = density;
            }
        }

        if (best_tau < 0.0) {
            // Full reveal through the request channel.
            advice.prior = 0.0;
            advice.request.assign(err.size(), 1u);
            return advice;
        }
        advice.prior = best_density;
        advice.request.resize(err.size(), 0);
        for (std::size_t i = 0; i < err.size(); ++i)
            advice.request[i] = err[i] > best_tau ? 1u : 0u;
        return advice;
    }

private:
    std::vector<std::uint8_t> map_bits(const std::vector<double>& means,
                                       std::span<const std::uint8_t> known_codes,
                                       unsigned done_mask, int level,
                                       std::vector<double>* error_prob) const {
        const std::size_t bins = 1u << m_;
        std::vector<std::uint8_t> bits(means.size());
        if (error_prob) error_prob->assign(means.size(), 0.5);
        std::vector<double> prob(bins);
        for (std::size_t i = 0; i < means.size(); ++i) {
            const double mu = means[i];
            double lower = 0.0;
            double p0 = 0.0, p1 = 0.0;
            for (std::size_t b = 0; b < bins; ++b) {
                const double upper = b + 1 < bins
                                         ? normal_cdf((boundaries_[b] - mu) / sigma_)
                                         : 1.0;
                prob[b] = upper - lower;
                lower = upper;
            }
            const unsigned known = known_codes[i];
            for (std::size_t b = 0; b < bins; ++b) {
                const unsigned code = gray_of_bin_[b];
                if ((code ^ known) & done_mask) continue; // inconsistent with fixed planes
                ((code >> level) & 1u ? p1 : p0) += prob[b];
            }
            if (p0 == 0.0 && p1 == 0.0) {
                // far-tail underflow: fall back to the bin of the mean
                const auto bin = static_cast<std::size_t>(
                    std::upper_bound(boundaries_.begin(), boundaries_.end(), mu) -
                    boundaries_.begin());
                bits[i] = (gray_of_bin_[bin] >> level) & 1u;
                if (error_prob) (*error_prob)[i] = 0.5;
            } else {
                bits[i] = p1 > p0 ? 1u : 0u;
                if (error_prob) (*error_prob)[i] = std::min(p0, p1) / (p0 + p1);
            }
        }
        return bits;
    }

    std::vector<double> means_;
    std::vector<double> boundaries_;
    int m_;
    std::vector<double> sac_means_;
    std::vector<std::uint8_t> sac_codes_;
    double sigma_ = 1.0;
    std::vector<std::uint8_t> gray_of_bin_;
};

} // namespace

KeySession distill(std::span<const double> alice_values, std::span<const double> bob_values,
                   const DistillConfig& cfg) {
    if (alice_values.size() != bob_values.size())
        throw std::invalid_argument("distill: value vectors must have equal length");
    if (cfg.m < 1 || cfg.m > 8) throw std::invalid_argument("slice count m must lie in [1, 8]");
    if (cfg.v < 1.0) throw std::invalid_argument("distill: V must be >= 1");

    KeySession session;
    session.direction = cfg.direction;
    session.m = cfg.m;
    session.margin_bits = cfg.margin_bits;

    session.estimate = estimate_channel(alice_values, bob_values, cfg.sacrificed_fraction,
                                        cfg.seed, cfg.n0, cfg.s);

    // Drop the revealed symbols from the key material.
    std::vector<bool> sacrificed(alice_values.size(), false);
    for (auto idx : session.estimate.indices) sacrificed[idx] = true;
    for (std::size_t i = 0; i < alice_values.size(); ++i) {
        if (!sacrificed[i]) {
            session.alice_values.push_back(alice_values[i]);
            session.bob_values.push_back(bob_values[i]);
        }
    }
    const std::size_t n = session.alice_values.size();
    if (n < (1u << cfg.m))
        throw std::invalid_argument("distill: too few retained symbols for 2^m bins");

    // Security gate at the estimated channel, with chi clamped up to the
    // vacuum noise so estimation noise cannot understate Eve.
    const double g_hat = std::max(session.estimate.g_hat, 1e-9);
    const double chi0 = (1.0 - g_hat) / g_hat;
    const double chi_eff = std::max(session.estimate.chi_hat, std::max(chi0, 0.0));
    const double eps_hat = chi_eff - chi0;

    session.i_ba = mutual_info_ba(g_hat, chi_eff, cfg.v, cfg.s);
    session.i_be = mutual_info_be_rr(g_hat, chi_eff, cfg.v);
    session.delta_i = delta_i_rr(g_hat, chi_eff, cfg.v, cfg.s);

    const bool rr = cfg.direction == Direction::rr;
    const bool gate_ok = rr ? session.delta_i > 0.0 : eps_hat < dr_threshold(g_hat);
    if (!gate_ok) {
        session.status = SessionStatus::abort_insecure;
        return session;
    }

    // Reference marginal fixes the published bin boundaries; the corrector
    // slices the conditional mean of the reference value given her own.
    const std::vector<double>& ref_values = rr ? session.bob_values : session.alice_values;
    const std::vector<double>& own_values = rr ? session.alice_values : session.bob_values;
    const double pred_slope = rr ? session.estimate.slope : session.estimate.slope_ba;
    std::vector<double> predictions(n);
    for (std::size_t i = 0; i < n; ++i) predictions[i] = pred_slope * own_values[i];

    const std::vector<double> boundaries = quantile_boundaries(ref_values, cfg.m);
    session.reference_slices = slice(ref_values, cfg.m, boundaries);
    std::vector<std::uint8_t> corrector_slices = slice(predictions, cfg.m, boundaries);

    // Multistage decoding state: the corrector's Gaussian posterior over the
    // reference bin, calibrated on the public sacrificed sample.
    std::vector<double> sac_ref, sac_pred;
    sac_ref.reserve(session.estimate.indices.size());
    for (auto idx : session.estimate.indices) {
        sac_ref.push_back(rr ? bob_values[idx] : alice_values[idx]);
        sac_pred.push_back(pred_slope * (rr ? alice_values[idx] : bob_values[idx]));
    }
    std::vector<std::uint8_t> sac_codes;
    if (sac_ref.size() >= (1u << cfg.m)) sac_codes = slice(sac_ref, cfg.m, boundaries);
    const double resid_var = g_hat * (chi_eff + cfg.s) * cfg.n0;
    const PlaneAdvisor advisor = BayesianReslicer(predictions, resid_var, boundaries, cfg.m,
                                                  std::move(sac_pred), std::move(sac_codes));

    CorrectionResult corr = rr ? correct(cfg.direction, corrector_slices, session.reference_slices,
                                         cfg.m, cfg.rounds, cfg.seed, {}, cfg.keep_log, advisor)
                               : correct(cfg.direction, session.reference_slices, corrector_slices,
                                         cfg.m, cfg.rounds, cfg.seed, {}, cfg.keep_log, advisor);
    session.corrected_slices = corr.corrected;
    session.disclosed_bits = corr.disclosed_bits;
    session.corrector_flow_bits = corr.corrector_flow_bits;
    session.message_log = std::move(corr.log);
    if (!corr.converged) {
        session.status = SessionStatus::abort_residual_mismatch;
        return session;
    }

    const double total_bits = static_cast<double>(n) * cfg.m;
    const double useful = total_bits - static_cast<double>(session.disclosed_bits);
    session.beta_achieved =
        session.i_ba > 0.0 ? useful / (static_cast<double>(n) * session.i_ba) : 0.0;

    const double eve_info = static_cast<double>(n) * session.i_be +
                            static_cast<double>(session.disclosed_bits);

    const std::vector<std::uint8_t> ref_bits = codes_to_bits(session.reference_slices, cfg.m);
    const std::vector<std::uint8_t> corr_bits = codes_to_bits(session.corrected_slices, cfg.m);
    if (hash_bits(ref_bits) != hash_bits(corr_bits)) {
        session.status = SessionStatus::abort_residual_mismatch;
        return session;
    }

    PrivacyResult pa_ref = privacy_amplify(ref_bits, eve_info, cfg.margin_bits, cfg.seed);
    PrivacyResult pa_corr = privacy_amplify(corr_bits, eve_info, cfg.margin_bits, cfg.seed);
    if (pa_ref.aborted || pa_corr.aborted) {
        session.status = SessionStatus::abort_no_key;
        return session;
    }

    session.final_key_a = rr ? pa_corr.key : pa_ref.key;
    session.final_key_b = rr ? pa_ref.key : pa_corr.key;
    session.key_length = pa_ref.target_bits;
    if (hash_bits(session.final_key_a) != hash_bits(session.final_key_b)) {
        session.status = SessionStatus::abort_residual_mismatch;
        session.final_key_a.clear();
        session.final_key_b.clear();
        session.key_length = 0;
        return session;
    }
    session.status = SessionStatus::success;
    return session;
}

std::string message_log_to_jsonl(std::span<const ParityRecord> log) {
    std::string out;
    out.reserve(log.size() * 96);
    char buf[224];
    for (const auto& r : log) {
        if (r.kind == "hash") {
            std::snprintf(buf, sizeof(buf),
                          "{\"round\":%d,\"direction\":\"%s\",\"level\":%d,\"kind\":\"%s\","
                          "\"block\":[%u,%u],\"bits\":%llu,\"value\":\"%016llx\"}\n",
                          r.round, r.direction.c_str(), r.level, r.kind.c_str(), r.lo, r.hi,
                          static_cast<unsigned long long>(r.bits),
                          static_cast<unsigned long long>(r.value));
        } else {
            std::snprintf(buf, sizeof(buf),
                          "{\"round\":%d,\"direction\":\"%s\",\"level\":%d,\"kind\":\"%s\","
                          "\"block\":[%u,%u],\"parity\":%d,\"bits\":%llu}\n",
                          r.round, r.direction.c_str(), r.level, r.kind.c_str(), r.lo, r.hi,
                          r.parity, static_cast<unsigned long long>(r.bits));
        }
        out += buf;
    }
    return out;
}

} // namespace cvqkd
