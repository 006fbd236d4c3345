#include "cvqkd/gaussian.hpp"
#include "cvqkd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <stdexcept>

namespace cvqkd {

namespace {

constexpr double kPsdRelTol = 1e-9;

void check_labels_unique(const std::vector<std::string>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j)
            if (labels[i] == labels[j])
                throw std::invalid_argument("duplicate quadrature label: " + labels[i]);
}

} // namespace

GaussianEnsemble::GaussianEnsemble(std::vector<std::string> labels, Eigen::VectorXd mean,
                                   Eigen::MatrixXd cov, double n0)
    : labels_(std::move(labels)), mean_(std::move(mean)), cov_(std::move(cov)), n0_(n0) {
    validate_state();
}

GaussianEnsemble::GaussianEnsemble(std::vector<std::string> labels, Eigen::MatrixXd cov, double n0)
    : labels_(std::move(labels)), mean_(Eigen::VectorXd::Zero(cov.rows())), cov_(std::move(cov)),
      n0_(n0) {
    validate_state();
}

void GaussianEnsemble::validate_state() {
    if (n0_ <= 0.0) throw std::invalid_argument("shot noise n0 must be positive");
    check_labels_unique(labels_);
    const auto k = static_cast<Eigen::Index>(labels_.size());
    if (mean_.size() != k || cov_.rows() != k || cov_.cols() != k)
        throw std::invalid_argument("labels, mean and covariance dimensions disagree");
    if (k == 0) return;

    const double scale = std::max(cov_.diagonal().maxCoeff(), n0_);
    if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw std::invalid_argument("covariance matrix is not symmetric");
    cov_ = ((cov_ + cov_.transpose()) / 2.0).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPsdRelTol * scale)
        throw std::invalid_argument("covariance matrix is not positive semidefinite");
}

GaussianEnsemble GaussianEnsemble::diagonal(std::vector<std::string> labels,
                                            const std::vector<double>& variances, double n0) {
    if (labels.size() != variances.size())
        throw std::invalid_argument("diagonal: one variance per label required");
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()),
                                                static_cast<Eigen::Index>(labels.size()));
    for (Eigen::Index i = 0; i < cov.rows(); ++i)
        cov(i, i) = variances[static_cast<std::size_t>(i)] * n0;
    return GaussianEnsemble(std::move(labels), std::move(cov), n0);
}

GaussianEnsemble GaussianEnsemble::vacuum(std::vector<std::string> labels, double n0) {
    return diagonal(std::move(labels), std::vector<double>(labels.size(), 1.0), n0);
}

Eigen::Index GaussianEnsemble::index_of(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw std::invalid_argument("unknown quadrature label: " + label);
    return static_cast<Eigen::Index>(it - labels_.begin());
}

bool GaussianEnsemble::has_label(const std::string& label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

double GaussianEnsemble::variance(const std::string& label) const {
    auto i = index_of(label);
    return cov_(i, i);
}

double GaussianEnsemble::covariance(const std::string& a, const std::string& b) const {
    return cov_(index_of(a), index_of(b));
}

GaussianEnsemble GaussianEnsemble::tensor(const GaussianEnsemble& other) const {
    if (std::abs(n0_ - other.n0_) > 1e-15 * n0_)
        throw std::invalid_argument("tensor: shot-noise units disagree");
    std::vector<std::string> labels = labels_;
    labels.insert(labels.end(), other.labels_.begin(), other.labels_.end());
    const auto k1 = size(), k2 = other.size();
    Eigen::VectorXd mean(k1 + k2);
    mean << mean_, other.mean_;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k1 + k2, k1 + k2);
    cov.topLeftCorner(k1, k1) = cov_;
    cov.bottomRightCorner(k2, k2) = other.cov_;
    return GaussianEnsemble(std::move(labels), std::move(mean), std::move(cov), n0_);
}

GaussianEnsemble GaussianEnsemble::renamed(const std::vector<std::string>& labels) const {
    return GaussianEnsemble(labels, mean_, cov_, n0_);
}

GaussianEnsemble GaussianEnsemble::marginal(std::span<const std::string> keep) const {
    std::vector<Eigen::Index> idx;
    idx.reserve(keep.size());
    for (const auto& l : keep) idx.push_back(index_of(l));
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd mean(k);
    Eigen::MatrixXd cov(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        mean(i) = mean_(idx[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < k; ++j)
            cov(i, j) = cov_(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return GaussianEnsemble(std::vector<std::string>(keep.begin(), keep.end()),
                            std::move(mean), std::move(cov), n0_);
}

GaussianEnsemble epr_ensemble(double v, ShotNoise n0) {
    if (v < 1.0) throw std::domain_error("EPR modulation variance V must be >= 1");
    const double c = std::sqrt(v * v - 1.0) * n0.n0;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(4, 4);
    cov.diagonal().setConstant(v * n0.n0);
    // order: Q', P', Q, P
    cov(0, 2) = cov(2, 0) = c;
    cov(1, 3) = cov(3, 1) = -c;
    return GaussianEnsemble({"Q'", "P'", "Q", "P"}, std::move(cov), n0.n0);
}

GaussianEnsemble beamsplitter(const GaussianEnsemble& e, const std::string& in1,
                              const std::string& in2, double t) {
    if (in1 == in2) throw std::invalid_argument("beamsplitter inputs must be distinct");
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("beamsplitter transmission must lie in [0,1]");
    const auto i = e.index_of(in1), j = e.index_of(in2);
    const double ct = std::sqrt(t), st = std::sqrt(1.0 - t);

    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(e.size(), e.size());
    m(i, i) = ct; m(i, j) = st;
    m(j, i) = -st; m(j, j) = ct;

    Eigen::VectorXd mean = m * e.mean();
    Eigen::MatrixXd cov = m * e.cov() * m.transpose();
    return GaussianEnsemble(e.labels(), std::move(mean), std::move(cov), e.n0());
}

namespace {

/// Shared core of exact and degenerate conditioning. Inverts the conditioning
/// block with an eigen pseudo-inverse when it is singular.
ConditionalVariance condition_impl(const Eigen::MatrixXd& cov, Eigen::Index target,
                                   const std::vector<Eigen::Index>& given) {
    ConditionalVariance out;
    out.variance = cov(target, target);
    if (given.empty()) return out;

    const auto k = static_cast<Eigen::Index>(given.size());
    Eigen::MatrixXd sigma(k, k);
    Eigen::VectorXd cross(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        cross(a) = cov(target, given[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < k; ++b)
            sigma(a, b) = cov(given[static_cast<std::size_t>(a)], given[static_cast<std::size_t>(b)]);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    const double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd inv_eigs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        if (es.eigenvalues()(a) > tol) {
            inv_eigs(a) = 1.0 / es.eigenvalues()(a);
        } else {
            inv_eigs(a) = 0.0;
            out.degenerate = true;
        }
    }
    Eigen::VectorXd w = es.eigenvectors().transpose() * cross;
    out.variance -= w.dot(inv_eigs.asDiagonal() * w);
    if (out.variance < 0.0) out.variance = 0.0;
    return out;
}

} // namespace

ConditionalVariance condition_on(const GaussianEnsemble& e, const std::string& target,
                                 std::span<const std::string> given) {
    std::vector<Eigen::Index> idx;
    idx.reserve(given.size());
    for (const auto& l : given) {
        if (l == target) throw std::invalid_argument("conditioning set must not contain the target");
        idx.push_back(e.index_of(l));
    }
    return condition_impl(e.cov(), e.index_of(target), idx);
}

ConditionalVariance condition_on(const GaussianEnsemble& e, const std::string& target,
                                 std::initializer_list<std::string> given) {
    std::vector<std::string> g(given);
    return condition_on(e, target, std::span<const std::string>(g));
}

Eigen::Index SampleBatch::index_of(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw std::invalid_argument("unknown sample column: " + label);
    return static_cast<Eigen::Index>(it - labels.begin());
}

Eigen::VectorXd SampleBatch::col(const std::string& label) const {
    return data.col(index_of(label));
}

void SampleBatch::append(const SampleBatch& other) {
    if (other.data.rows() != data.rows())
        throw std::invalid_argument("append: row counts disagree");
    Eigen::MatrixXd joined(data.rows(), data.cols() + other.data.cols());
    joined << data, other.data;
    data = std::move(joined);
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

SampleBatch sample(const GaussianEnsemble& e, std::size_t n, std::uint64_t seed, unsigned threads) {
    if (n < 1) throw std::invalid_argument("sample: need n >= 1");
    const auto k = e.size();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e.cov());
    const double scale = std::max(e.cov().diagonal().maxCoeff(), e.n0());
    Eigen::VectorXd lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < k; ++i) {
        if (lam(i) < -kPsdRelTol * scale)
            throw std::domain_error("sample: covariance is not PSD (unphysical state)");
        lam(i) = std::max(lam(i), 0.0);
    }
    const Eigen::MatrixXd factor = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();

    SampleBatch batch;
    batch.labels = e.labels();
    batch.seed = seed;
    batch.n0 = e.n0();
    batch.data.resize(static_cast<Eigen::Index>(n), k);

    const std::size_t nchunks = (n + kSampleChunk - 1) / kSampleChunk;
    auto fill_chunk = [&](std::size_t c) {
        Rng rng(derive_stream(seed, c));
        const std::size_t lo = c * kSampleChunk;
        const std::size_t hi = std::min(n, lo + kSampleChunk);
        Eigen::VectorXd z(k);
        for (std::size_t r = lo; r < hi; ++r) {
            for (Eigen::Index j = 0; j < k; ++j) z(j) = rng.normal();
            batch.data.row(static_cast<Eigen::Index>(r)) = (e.mean() + factor * z).transpose();
        }
    };

    if (threads <= 1 || nchunks <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) fill_chunk(c);
    } else {
        const unsigned nworkers = std::min<unsigned>(threads, static_cast<unsigned>(nchunks));
        std::vector<std::future<void>> workers;
        workers.reserve(nworkers);
        for (unsigned w = 0; w < nworkers; ++w) {
            workers.push_back(std::async(std::launch::async, [&, w] {
                for (std::size_t c = w; c < nchunks; c += nworkers) fill_chunk(c);
            }));
        }
        for (auto& f : workers) f.get();
    }
    return batch;
}

EmpiricalConditional empirical_conditional_variance(const SampleBatch& b, const std::string& target,
                                                    std::span<const std::string> given) {
    const auto n = b.n();
    const auto k = static_cast<Eigen::Index>(given.size());
    if (n < 10 * std::max<Eigen::Index>(k, 1))
        throw std::invalid_argument("empirical_conditional_variance: need n >= 10*|given|");

    EmpiricalConditional out;
    const Eigen::VectorXd y = b.col(target);
    if (k == 0) {
        out.variance = y.squaredNorm() / static_cast<double>(n);
        out.stderr_est = out.variance * std::sqrt(2.0 / static_cast<double>(n));
        return out;
    }

    Eigen::MatrixXd x(n, k);
    for (Eigen::Index j = 0; j < k; ++j)
        x.col(j) = b.col(given[static_cast<std::size_t>(j)]);

    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::VectorXd xty = x.transpose() * y;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xtx);
    const double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd inv_eigs(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        if (es.eigenvalues()(a) > tol) {
            inv_eigs(a) = 1.0 / es.eigenvalues()(a);
        } else {
            inv_eigs(a) = 0.0;
            out.degenerate = true;
        }
    }
    const Eigen::VectorXd beta =
        es.eigenvectors() * (inv_eigs.asDiagonal() * (es.eigenvectors().transpose() * xty));

    const double rss = std::max(y.squaredNorm() - beta.dot(xty), 0.0);
    const double dof = static_cast<double>(n - k);
    out.variance = rss / dof;
    out.stderr_est = out.variance * std::sqrt(2.0 / dof);
    return out;
}

EmpiricalConditional empirical_conditional_variance(const SampleBatch& b, const std::string& target,
                                                    std::initializer_list<std::string> given) {
    std::vector<std::string> g(given);
    return empirical_conditional_variance(b, target, std::span<const std::string>(g));
}

Eigen::MatrixXd empirical_covariance(const SampleBatch& b) {
    const auto n = b.n();
    if (n < 2) throw std::invalid_argument("empirical_covariance: need n >= 2");
    const Eigen::RowVectorXd mean = b.data.colwise().mean();
    const Eigen::MatrixXd centered = b.data.rowwise() - mean;
    return (centered.transpose() * centered) / static_cast<double>(n - 1);
}

double covariance_entry_stderr(const Eigen::MatrixXd& cov, Eigen::Index i, Eigen::Index j,
                               std::size_t n) {
    return std::sqrt((cov(i, j) * cov(i, j) + cov(i, i) * cov(j, j)) / static_cast<double>(n));
}

} // namespace cvqkd
