#include <doctest.h>

#include "fvstack/reduction.hpp"

using namespace fvstack;
using namespace fvstack::reduction;

namespace {

Matrix gaussian_rows(int n, int d, double scale, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g;
    Matrix rows(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) rows(i, j) = scale * g(rng);
    return rows;
}

// Population covariance of the projected rows.
Matrix pop_cov(const Matrix& rows) {
    Matrix centered = rows.rowwise() - rows.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(rows.rows());
}

}  // namespace

TEST_CASE("axis-aligned data recovers the axes in variance order") {
    // Independent coordinates with stds 3 > 2 > 1 -> principal directions are
    // the unit axes, eigenvalues are the per-axis scatters.
    const int n = 4000;
    Rng rng(1);
    std::normal_distribution<double> g;
    Matrix rows(n, 3);
    for (int i = 0; i < n; ++i) {
        rows(i, 0) = 3.0 * g(rng);
        rows(i, 1) = 2.0 * g(rng);
        rows(i, 2) = 1.0 * g(rng);
    }
    ReductionModel m = pca_fit(rows, PcaTarget::dims(3), false);
    REQUIRE(m.output_dim() == 3);
    CHECK(m.eigvals[0] > m.eigvals[1]);
    CHECK(m.eigvals[1] > m.eigvals[2]);
    for (int i = 0; i < 3; ++i) {
        Vector dir = m.basis.row(i).cwiseAbs();
        int arg;
        dir.maxCoeff(&arg);
        CHECK(arg == i);
        CHECK(dir[arg] > 0.99);
        // scatter eigenvalue ~ n * axis variance
        const double axis_var = m.eigvals[i] / n;
        const double expect = (3.0 - i) * (3.0 - i);
        CHECK(axis_var == doctest::Approx(expect).epsilon(0.1));
    }
}

TEST_CASE("basis rows are orthonormal and signed deterministically") {
    Matrix rows = gaussian_rows(100, 8, 1.0, 7);
    ReductionModel m = pca_fit(rows, PcaTarget::dims(5), false);
    Matrix gram = m.basis * m.basis.transpose();
    CHECK((gram - Matrix::Identity(5, 5)).lpNorm<Eigen::Infinity>() < 1e-10);
    for (int i = 0; i < 5; ++i) {
        int arg;
        m.basis.row(i).cwiseAbs().maxCoeff(&arg);
        CHECK(m.basis(i, arg) > 0.0);  // largest-magnitude entry forced positive
    }
}

TEST_CASE("projection preserves pairwise distances of in-span data") {
    // Data living in a 4-dim subspace of R^10, reduced to 4 dims: distances survive.
    Matrix latent = gaussian_rows(60, 4, 1.0, 3);
    Matrix lift = gaussian_rows(4, 10, 1.0, 4);
    Matrix rows = latent * lift;
    ReductionModel m = pca_fit(rows, PcaTarget::dims(4), false);
    Matrix proj = project(m, rows);
    for (int i = 0; i < 10; ++i)
        for (int j = i + 1; j < 10; ++j) {
            const double orig = (rows.row(i) - rows.row(j)).norm();
            const double red = (proj.row(i) - proj.row(j)).norm();
            CHECK(red == doctest::Approx(orig).epsilon(1e-8));
        }
}

TEST_CASE("variance fraction target picks the smallest sufficient rank") {
    Rng rng(5);
    std::normal_distribution<double> g;
    Matrix rows(2000, 4);
    for (int i = 0; i < 2000; ++i) {
        rows(i, 0) = 10.0 * g(rng);
        rows(i, 1) = 1.0 * g(rng);
        rows(i, 2) = 0.1 * g(rng);
        rows(i, 3) = 0.01 * g(rng);
    }
    ReductionModel big = pca_fit(rows, PcaTarget::fraction(0.95), false);
    CHECK(big.output_dim() == 1);  // first axis alone carries ~99% of variance
    ReductionModel all = pca_fit(rows, PcaTarget::fraction(1.0), false);
    CHECK(all.output_dim() == 4);
}

TEST_CASE("whitening yields identity covariance") {
    Matrix corr(6, 6);
    corr.setIdentity();
    corr(0, 1) = corr(1, 0) = 0.9;
    Matrix rows = gaussian_rows(3000, 6, 1.0, 11) * corr;
    ReductionModel m = pca_fit(rows, PcaTarget::dims(6), true);
    Matrix cov = pop_cov(project(m, rows));
    CHECK((cov - Matrix::Identity(6, 6)).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("Gram path (n < d) matches the covariance path up to sign") {
    Matrix wide = gaussian_rows(12, 40, 1.0, 21);  // forces the Gram route
    ReductionModel m = pca_fit(wide, PcaTarget::dims(5), false);
    REQUIRE(m.output_dim() == 5);
    Matrix gram = m.basis * m.basis.transpose();
    CHECK((gram - Matrix::Identity(5, 5)).lpNorm<Eigen::Infinity>() < 1e-9);

    // Oracle: eigenvalues of the full scatter matrix (frozen via direct solve).
    Matrix centered = wide.rowwise() - wide.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Matrix> es(centered.transpose() * centered);
    Vector lam = es.eigenvalues().reverse();
    for (int i = 0; i < 5; ++i)
        CHECK(m.eigvals[i] == doctest::Approx(lam[i]).epsilon(1e-8));

    // Projections agree with the explicit eigenvector projection up to sign.
    for (int i = 0; i < 5; ++i) {
        Vector v = es.eigenvectors().col(39 - i);
        Vector mine = m.basis.row(i).transpose();
        const double agree = std::abs(v.dot(mine));
        CHECK(agree == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("rank-deficient input truncates to the numerical rank") {
    Matrix latent = gaussian_rows(50, 2, 1.0, 31);
    Matrix lift = gaussian_rows(2, 9, 1.0, 32);
    Matrix rows = latent * lift;  // rank 2 in R^9
    ReductionModel m = pca_fit(rows, PcaTarget::dims(6), false);
    CHECK(m.output_dim() == 2);
    ReductionModel w = pca_fit(rows, PcaTarget::fraction(1.0), true);
    CHECK(w.output_dim() == 2);
    CHECK((pop_cov(project(w, rows)) - Matrix::Identity(2, 2)).lpNorm<Eigen::Infinity>() <
          1e-8);
}

TEST_CASE("reduction layer equals project-then-l2 for whitened models") {
    Matrix rows = gaussian_rows(200, 10, 2.0, 41);
    ReductionModel m = pca_fit(rows, PcaTarget::dims(4), true);
    ReductionLayer layer = reduction_layer_weights(m);
    CHECK(layer.weights.rows() == 4);
    CHECK(layer.weights.cols() == 10);

    Matrix via_layer = apply_reduction_layer(layer, rows);
    Matrix via_proj = project(m, rows);
    for (int i = 0; i < 200; ++i) {
        Vector p = via_proj.row(i).transpose();
        const double n = p.norm();
        if (n > 0) p /= n;
        CHECK((via_layer.row(i).transpose() - p).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK(via_layer.row(i).norm() == doctest::Approx(1.0).epsilon(1e-10));
    }

    ReductionModel plain = pca_fit(rows, PcaTarget::dims(4), false);
    CHECK_THROWS_AS(reduction_layer_weights(plain), ConfigError);
}

TEST_CASE("fit is deterministic and validates input") {
    Matrix rows = gaussian_rows(30, 6, 1.0, 55);
    ReductionModel a = pca_fit(rows, PcaTarget::dims(3), true);
    ReductionModel b = pca_fit(rows, PcaTarget::dims(3), true);
    CHECK(a.basis == b.basis);
    CHECK(a.eigvals == b.eigvals);

    CHECK_THROWS_AS(pca_fit(Matrix(0, 4), PcaTarget::dims(2), false), DataError);
    CHECK_THROWS_AS(pca_fit(rows, PcaTarget::dims(0), false), ConfigError);
    CHECK_THROWS_AS(pca_fit(rows, PcaTarget::fraction(0.0), false), ConfigError);
    CHECK_THROWS_AS(pca_fit(rows, PcaTarget::fraction(1.5), false), ConfigError);
    CHECK_THROWS_AS(project(a, Matrix::Random(3, 5)), DataError);
}
