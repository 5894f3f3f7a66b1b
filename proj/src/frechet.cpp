#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "cyclocast/metrics/metrics.hpp"

namespace cyclocast::metrics {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& m, const char* what) {
    if (m.rank() != 2 || m.dim(0) != m.dim(1))
        throw std::invalid_argument(std::string(what) + ": covariance must be square");
    const auto n = m.dim(0);
    Eigen::MatrixXd out(n, n);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) out(i, j) = m[i * n + j];

    const double asym = (out - out.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8)
        throw std::invalid_argument(std::string(what) + ": covariance asymmetric beyond 1e-8");
    return 0.5 * (out + out.transpose());
}

// Symmetric PSD square root; negative eigenvalues clamp to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const std::vector<double>& mu1, const Tensor& cov1,
                        const std::vector<double>& mu2, const Tensor& cov2) {
    if (mu1.size() != mu2.size()) throw std::invalid_argument("frechet_distance: mean size mismatch");
    Eigen::MatrixXd s1 = to_eigen(cov1, "frechet_distance");
    Eigen::MatrixXd s2 = to_eigen(cov2, "frechet_distance");
    if (s1.rows() != static_cast<std::int64_t>(mu1.size()) || s1.rows() != s2.rows())
        throw std::invalid_argument("frechet_distance: dimension mismatch");

    double mean_term = 0.0;
    for (std::size_t i = 0; i < mu1.size(); ++i) {
        const double d = mu1[i] - mu2[i];
        mean_term += d * d;
    }

    // tr((s1 s2)^{1/2}) = tr((s1^{1/2} s2 s1^{1/2})^{1/2}); the inner matrix
    // is symmetric PSD, so only symmetric eigendecompositions are needed.
    Eigen::MatrixXd root1 = psd_sqrt(s1);
    Eigen::MatrixXd inner = root1 * s2 * root1;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double d2 = mean_term + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    return std::max(d2, 0.0);
}

}  // namespace cyclocast::metrics
