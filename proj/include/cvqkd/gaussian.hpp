#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cvqkd {

/// Shot-noise variance unit N0. Every variance in the toolkit is a multiple of
/// n0; dimensionless quantities (V, s, mu, G, chi, mutual informations) do not
/// change when n0 is rescaled.
struct ShotNoise {
    double n0 = 1.0;
};

/// Mean vector and covariance matrix of a set of named quadrature variables.
/// Means are in sqrt(n0) units, covariances in n0 units (stored absolute, i.e.
/// already multiplied by n0). Covariance must be symmetric and PSD within a
/// relative tolerance of 1e-9.
class GaussianEnsemble {
public:
    GaussianEnsemble(std::vector<std::string> labels, Eigen::VectorXd mean,
                     Eigen::MatrixXd cov, double n0 = 1.0);

    /// Zero-mean ensemble from a covariance alone.
    GaussianEnsemble(std::vector<std::string> labels, Eigen::MatrixXd cov, double n0 = 1.0);

    /// Independent modes with the given variances (n0 units).
    static GaussianEnsemble diagonal(std::vector<std::string> labels,
                                     const std::vector<double>& variances, double n0 = 1.0);
    static GaussianEnsemble vacuum(std::vector<std::string> labels, double n0 = 1.0);

    Eigen::Index size() const { return cov_.rows(); }
    const std::vector<std::string>& labels() const { return labels_; }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    double n0() const { return n0_; }

    Eigen::Index index_of(const std::string& label) const;
    bool has_label(const std::string& label) const;
    double variance(const std::string& label) const;
    double covariance(const std::string& a, const std::string& b) const;

    /// Join with an independent ensemble (block-diagonal covariance).
    GaussianEnsemble tensor(const GaussianEnsemble& other) const;

    /// Same state with relabelled variables.
    GaussianEnsemble renamed(const std::vector<std::string>& labels) const;

    /// Keep only the listed variables (marginal distribution).
    GaussianEnsemble marginal(std::span<const std::string> keep) const;

private:
    void validate_state();

    std::vector<std::string> labels_;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    double n0_;
};

/// Two-mode EPR state over (Q', P', Q, P): all variances V*n0,
/// <Q'Q> = +sqrt(V^2-1)*n0, <P'P> = -sqrt(V^2-1)*n0, zero mean.
GaussianEnsemble epr_ensemble(double v, ShotNoise n0 = {});

/// Mix two scalar variables on a beamsplitter of transmission t:
/// x1 -> sqrt(t)*x1 + sqrt(1-t)*x2, x2 -> sqrt(t)*x2 - sqrt(1-t)*x1.
/// Applying the same t with the labels swapped undoes the rotation.
GaussianEnsemble beamsplitter(const GaussianEnsemble& e, const std::string& in1,
                              const std::string& in2, double t);

struct ConditionalVariance {
    double variance = 0.0;
    /// Set when the conditioning covariance was singular and a pseudo-inverse
    /// projection was used.
    bool degenerate = false;
};

/// Residual variance of `target` after optimal linear estimation from `given`:
/// Var(target) - c Sigma^{-1} c^T.
ConditionalVariance condition_on(const GaussianEnsemble& e, const std::string& target,
                                 std::span<const std::string> given);
ConditionalVariance condition_on(const GaussianEnsemble& e, const std::string& target,
                                 std::initializer_list<std::string> given);

/// n x k matrix of draws from an ensemble. Row i is one joint sample.
/// Regenerating with the same (ensemble, n, seed) is bit-exact, and the data
/// never depend on how many threads produced them.
struct SampleBatch {
    std::vector<std::string> labels;
    Eigen::MatrixXd data; // n rows, |labels| columns
    std::uint64_t seed = 0;
    double n0 = 1.0;

    Eigen::Index n() const { return data.rows(); }
    Eigen::Index index_of(const std::string& label) const;
    Eigen::VectorXd col(const std::string& label) const;

    /// Append columns of another batch with the same row count.
    void append(const SampleBatch& other);
};

/// Number of rows generated per RNG substream; fixed so that chunked and
/// serial generation agree.
inline constexpr std::size_t kSampleChunk = 8192;

/// i.i.d. draws from N(mean, cov) using a symmetric eigenfactorization with
/// negative eigenvalues above -1e-9 (relative) clipped to zero. Chunk c of
/// kSampleChunk rows uses the substream derive_stream(seed, c); threads only
/// control how chunks are scheduled.
SampleBatch sample(const GaussianEnsemble& e, std::size_t n, std::uint64_t seed,
                   unsigned threads = 1);

struct EmpiricalConditional {
    double variance = 0.0;
    double stderr_est = 0.0;
    bool degenerate = false;
};

/// Residual variance of the no-intercept OLS regression of `target` on
/// `given`, with the unbiased denominator n - |given|. Empty `given` gives the
/// plain second moment with denominator n.
EmpiricalConditional empirical_conditional_variance(const SampleBatch& b, const std::string& target,
                                                    std::span<const std::string> given);
EmpiricalConditional empirical_conditional_variance(const SampleBatch& b, const std::string& target,
                                                    std::initializer_list<std::string> given);

/// Mean-subtracted sample covariance (denominator n-1).
Eigen::MatrixXd empirical_covariance(const SampleBatch& b);

/// Standard error of the (i,j) entry of a Gaussian sample covariance:
/// sqrt((c_ij^2 + c_ii c_jj)/n).
double covariance_entry_stderr(const Eigen::MatrixXd& cov, Eigen::Index i, Eigen::Index j,
                               std::size_t n);

} // namespace cvqkd
