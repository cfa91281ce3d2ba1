#ifndef MICH_SCP_MULTIVARIATE_HPP
#define MICH_SCP_MULTIVARIATE_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mich/errors.hpp"
#include "mich/special.hpp"

namespace mich {

// Constant precision matrix in spectral form, Lambda = Q diag(evals) Q^T.
// The jump prior N(0, I/omega0) is rotation invariant, so every multivariate
// computation runs in the rotated coordinates where Lambda is diagonal.
struct PrecisionSpectral {
    Eigen::VectorXd evals;
    Eigen::MatrixXd Q;
    double log_det = 0.0;

    int dim() const { return static_cast<int>(evals.size()); }
};

inline PrecisionSpectral decompose_precision(const Eigen::MatrixXd& Lambda) {
    if (Lambda.rows() != Lambda.cols() || Lambda.rows() == 0)
        throw DomainError("decompose_precision: Lambda must be square");
    if (!Lambda.isApprox(Lambda.transpose(), 1e-10))
        throw DomainError("decompose_precision: Lambda must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Lambda);
    if (es.info() != Eigen::Success)
        throw DomainError("decompose_precision: eigendecomposition failed");
    PrecisionSpectral out;
    out.evals = es.eigenvalues();
    out.Q = es.eigenvectors();
    for (int i = 0; i < out.evals.size(); ++i) {
        if (!(out.evals[i] > 0.0))
            throw DomainError("decompose_precision: Lambda must be positive definite");
        out.log_det += std::log(out.evals[i]);
    }
    return out;
}

// Posterior of the d-dimensional mean-scp model. b_rot holds the posterior
// jump means in rotated coordinates; the posterior precision at location t is
// Q diag(omega0 + S[t] * evals) Q^T.
struct MultiMeanScpPosterior {
    Eigen::MatrixXd b_rot;  // T x d
    std::vector<double> S;  // suffix sums of the per-time weights
    std::vector<double> pi_bar, log_pi_bar;
    double omega0 = 0.0;

    Eigen::MatrixXd b_bar(const PrecisionSpectral& prec) const {
        return b_rot * prec.Q.transpose();
    }
    double log_det_omega_bar(const PrecisionSpectral& prec, std::size_t t) const {
        double v = 0.0;
        for (int i = 0; i < prec.dim(); ++i) v += std::log(omega0 + S[t] * prec.evals[i]);
        return v;
    }
};

// mean-scp for y_t ~ N_d(mu_t, (c_t Lambda)^{-1}) with optional per-time
// scalar weights c_t. y_rot must already be rotated (rows y_t^T Q).
inline MultiMeanScpPosterior multi_mean_scp_rotated(const Eigen::MatrixXd& y_rot,
                                                    const PrecisionSpectral& prec,
                                                    std::span<const double> weights,
                                                    double omega0,
                                                    std::span<const double> log_pi) {
    const std::size_t T = static_cast<std::size_t>(y_rot.rows());
    const int d = prec.dim();
    if (T == 0 || y_rot.cols() != d) throw DomainError("multi_mean_scp: shape mismatch");
    if (log_pi.size() != T || (!weights.empty() && weights.size() != T))
        throw DomainError("multi_mean_scp: length mismatch");
    if (!(omega0 > 0.0)) throw DomainError("multi_mean_scp: omega0 must be positive");

    MultiMeanScpPosterior post;
    post.omega0 = omega0;
    post.b_rot.resize(static_cast<Eigen::Index>(T), d);
    post.S.resize(T);
    std::vector<double> logw(T);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    double ws = 0.0;
    for (std::size_t i = T; i-- > 0;) {
        const double c = weights.empty() ? 1.0 : weights[i];
        ws += c;
        acc += c * y_rot.row(static_cast<Eigen::Index>(i)).transpose();
        post.S[i] = ws;
        double log_det = 0.0, quad = 0.0;
        for (int k = 0; k < d; ++k) {
            const double om = omega0 + ws * prec.evals[k];
            const double b = prec.evals[k] * acc[k] / om;
            post.b_rot(static_cast<Eigen::Index>(i), k) = b;
            log_det += std::log(om);
            quad += om * b * b;
        }
        logw[i] = log_pi[i] - 0.5 * log_det + 0.5 * quad;
    }
    auto nw = normalize_log_weights_full(logw);
    post.pi_bar = std::move(nw.prob);
    post.log_pi_bar = std::move(nw.log_prob);
    return post;
}

// Convenience entry point in original coordinates.
inline MultiMeanScpPosterior multi_mean_scp(const Eigen::MatrixXd& y,
                                            const PrecisionSpectral& prec,
                                            std::span<const double> weights,
                                            double omega0,
                                            std::span<const double> log_pi) {
    return multi_mean_scp_rotated(y * prec.Q, prec, weights, omega0, log_pi);
}

// E[mu_t] rows (in whichever coordinates b is given).
inline Eigen::MatrixXd multi_mean_moment(const Eigen::MatrixXd& b,
                                         std::span<const double> pi_bar) {
    Eigen::MatrixXd out(b.rows(), b.cols());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(b.cols());
    for (Eigen::Index t = 0; t < b.rows(); ++t) {
        acc += pi_bar[static_cast<std::size_t>(t)] * b.row(t);
        out.row(t) = acc;
    }
    return out;
}

// Precision estimate from first differences: Var(y_t - y_{t-1}) = 2/Lambda
// when the precision is constant. Needs enough observations for the sample
// covariance of the differences to be invertible.
inline Eigen::MatrixXd estimate_precision(const Eigen::MatrixXd& y) {
    const Eigen::Index T = y.rows();
    const Eigen::Index d = y.cols();
    if (T - 1 <= d || T < 3)
        throw EstimatorError(
            "estimate_precision: too few observations for the difference covariance; "
            "supply the precision matrix directly");
    Eigen::MatrixXd diff(T - 1, d);
    for (Eigen::Index t = 1; t < T; ++t) diff.row(t - 1) = y.row(t) - y.row(t - 1);
    Eigen::RowVectorXd mean = diff.colwise().mean();
    diff.rowwise() -= mean;
    Eigen::MatrixXd cov = diff.transpose() * diff / (2.0 * static_cast<double>(T - 2));
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
        throw EstimatorError(
            "estimate_precision: difference covariance is singular; "
            "supply the precision matrix directly");
    return llt.solve(Eigen::MatrixXd::Identity(d, d));
}

}  // namespace mich

#endif  // MICH_SCP_MULTIVARIATE_HPP
