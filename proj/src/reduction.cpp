#include "fvstack/reduction.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace fvstack::reduction {

namespace {

constexpr double kRankTolFactor = 1e-10;

// Sign convention: largest-magnitude entry of each basis row made positive so
// covariance- and Gram-path fits are directly comparable.
void fix_signs(Matrix& basis) {
    for (Eigen::Index r = 0; r < basis.rows(); ++r) {
        Eigen::Index imax;
        basis.row(r).cwiseAbs().maxCoeff(&imax);
        if (basis(r, imax) < 0) basis.row(r) = -basis.row(r);
    }
}

int pick_r(const Vector& eigvals, PcaTarget target, int available) {
    if (target.r > 0) return std::min(target.r, available);
    if (target.variance_fraction <= 0.0 || target.variance_fraction > 1.0)
        throw ConfigError("pca_fit: variance fraction must lie in (0,1]");
    const double total = eigvals.head(available).sum();
    double acc = 0;
    for (int i = 0; i < available; ++i) {
        acc += eigvals[i];
        if (acc >= target.variance_fraction * total - 1e-15) return i + 1;
    }
    return available;
}

}  // namespace

ReductionModel pca_fit(const Matrix& rows, PcaTarget target, bool whiten) {
    const Eigen::Index n = rows.rows();
    const Eigen::Index d = rows.cols();
    if (n < 2) throw DataError("pca_fit: need at least 2 rows");

    ReductionModel m;
    m.mean = rows.colwise().mean().transpose();
    m.n_train = static_cast<double>(n);
    m.whiten = whiten;
    const Matrix centered = rows.rowwise() - m.mean.transpose();

    Vector eigvals;  // scatter-matrix eigenvalues, descending
    Matrix basis;    // full available basis, rows = directions

    if (n >= d) {
        const Matrix scatter = centered.transpose() * centered;  // d x d
        Eigen::SelfAdjointEigenSolver<Matrix> es(scatter);
        if (es.info() != Eigen::Success) throw NumericError("pca_fit: eigensolver failed");
        eigvals = es.eigenvalues().reverse();
        basis = es.eigenvectors().rowwise().reverse().transpose();
    } else {
        const Matrix gram = centered * centered.transpose();  // n x n
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
        if (es.info() != Eigen::Success) throw NumericError("pca_fit: eigensolver failed");
        eigvals = es.eigenvalues().reverse();
        const Matrix v = es.eigenvectors().rowwise().reverse();  // n x n
        // direction_i = centered^T v_i / sqrt(lambda_i)
        basis = Matrix(eigvals.size(), d);
        for (Eigen::Index i = 0; i < eigvals.size(); ++i) {
            const double lam = std::max(eigvals[i], 0.0);
            if (lam > 0)
                basis.row(i) = ((centered.transpose() * v.col(i)) / std::sqrt(lam)).transpose();
            else
                basis.row(i).setZero();
        }
    }

    const double tol = kRankTolFactor * std::max(eigvals[0], 0.0);
    int rank = 0;
    while (rank < eigvals.size() && eigvals[rank] > tol) ++rank;
    if (rank == 0) throw NumericError("pca_fit: data has zero variance");

    const int r = pick_r(eigvals, target, rank);
    m.basis = basis.topRows(r);
    m.eigvals = eigvals.head(r);
    fix_signs(m.basis);
    return m;
}

Matrix project(const ReductionModel& model, const Matrix& rows) {
    if (rows.cols() != model.input_dim())
        throw DataError("project: expected " + std::to_string(model.input_dim()) +
                        " columns, got " + std::to_string(rows.cols()));
    Matrix z = (rows.rowwise() - model.mean.transpose()) * model.basis.transpose();
    if (model.whiten) {
        const Vector scale =
            (model.n_train * model.eigvals.cwiseInverse()).cwiseSqrt();
        z = z * scale.asDiagonal();
    }
    return z;
}

ReductionLayer reduction_layer_weights(const ReductionModel& model) {
    if (!model.whiten) throw ConfigError("reduction_layer_weights: model not whitened");
    const Vector scale = (model.n_train * model.eigvals.cwiseInverse()).cwiseSqrt();
    ReductionLayer layer;
    layer.weights = scale.asDiagonal() * model.basis;
    layer.offset = -(layer.weights * model.mean);
    return layer;
}

Matrix apply_reduction_layer(const ReductionLayer& layer, const Matrix& rows) {
    Matrix z = rows * layer.weights.transpose();
    z.rowwise() += layer.offset.transpose();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double n = z.row(i).norm();
        if (n > 0) z.row(i) /= n;
    }
    return z;
}

}  // namespace fvstack::reduction
