#include <doctest.h>

#include <algorithm>

#include "fvstack/gmm.hpp"

using namespace fvstack;
using namespace fvstack::gmm;

namespace {

Matrix two_clusters(int per_cluster, int dim, double sep, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g;
    Matrix data(2 * per_cluster, dim);
    for (int i = 0; i < 2 * per_cluster; ++i) {
        const double center = i < per_cluster ? -sep : sep;
        for (int d = 0; d < dim; ++d) data(i, d) = center + g(rng);
    }
    return data;
}

}  // namespace

TEST_CASE("sample of full pool is a permutation") {
    Matrix pool(10, 2);
    for (int i = 0; i < 10; ++i) pool.row(i) << i, -i;
    Matrix s = sample_rows(pool, 10, 3);
    std::vector<double> got(10);
    for (int i = 0; i < 10; ++i) got[i] = s(i, 0);
    std::sort(got.begin(), got.end());
    for (int i = 0; i < 10; ++i) CHECK(got[i] == i);
}

TEST_CASE("sampling is deterministic in the seed") {
    Matrix pool = Matrix::Random(500, 4);
    CHECK(sample_rows(pool, 100, 9) == sample_rows(pool, 100, 9));
    CHECK(sample_rows(pool, 100, 9) != sample_rows(pool, 100, 10));
}

TEST_CASE("large sample without replacement is distinct") {
    Matrix pool(300000, 1);
    for (int i = 0; i < 300000; ++i) pool(i, 0) = i;
    Matrix s = sample_rows(pool, 256000, 1);
    std::vector<double> vals(s.data(), s.data() + s.size());
    std::sort(vals.begin(), vals.end());
    CHECK(std::adjacent_find(vals.begin(), vals.end()) == vals.end());
}

TEST_CASE("K=1 fit matches the closed-form Gaussian MLE") {
    Matrix data = Matrix::Random(200, 3);
    FitConfig cfg;
    cfg.K = 1;
    cfg.em_iters = 2;
    GmmModel m = gmm_fit(data, cfg);
    const Vector mean = data.colwise().mean().transpose();
    CHECK((m.means.row(0).transpose() - mean).lpNorm<Eigen::Infinity>() < 1e-10);
    for (int d = 0; d < 3; ++d) {
        const double var = (data.col(d).array() - mean[d]).square().sum() / 200.0;
        CHECK(m.stds(0, d) == doctest::Approx(std::sqrt(var)).epsilon(1e-9));
    }
    CHECK(m.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("K=2 recovers well-separated cluster centers") {
    Matrix data = two_clusters(400, 4, 6.0, 21);
    FitConfig cfg;
    cfg.K = 2;
    cfg.em_iters = 10;
    cfg.seed = 5;
    GmmModel m = gmm_fit(data, cfg);
    // each true center matched within 0.1 cluster radii (std = 1)
    std::vector<double> dist(2);
    for (int k = 0; k < 2; ++k) {
        const double to_neg = (m.means.row(k).array() + 6.0).matrix().norm();
        const double to_pos = (m.means.row(k).array() - 6.0).matrix().norm();
        dist[k] = std::min(to_neg, to_pos);
        CHECK(dist[k] < 0.1 * 2.0);
    }
    CHECK(std::abs(m.means(0, 0) - m.means(1, 0)) > 6.0);  // distinct centers
}

TEST_CASE("K=256 on 18-dim data yields a 256x18 mean matrix") {
    Matrix data = Matrix::Random(1024, 18);
    FitConfig cfg;
    cfg.K = 256;
    cfg.em_iters = 2;
    GmmModel m = gmm_fit(data, cfg);
    CHECK(m.means.rows() == 256);
    CHECK(m.means.cols() == 18);
}

TEST_CASE("posterior basics") {
    GmmModel single;
    single.K = 1;
    single.dim = 2;
    single.weights = Vector::Ones(1);
    single.means = Matrix::Zero(1, 2);
    single.stds = Matrix::Ones(1, 2);
    CHECK(posterior(single, Vector{{5.0, -3.0}})[0] == doctest::Approx(1.0));

    GmmModel twin;
    twin.K = 2;
    twin.dim = 2;
    twin.weights = Vector::Constant(2, 0.5);
    twin.means = Matrix::Zero(2, 2);
    twin.stds = Matrix::Ones(2, 2);
    Vector g = posterior(twin, Vector{{1.0, 1.0}});
    CHECK(g[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-12));

    GmmModel apart;
    apart.K = 2;
    apart.dim = 1;
    apart.weights = Vector::Constant(2, 0.5);
    apart.means = Matrix(2, 1);
    apart.means << 0.0, 10.0;
    apart.stds = Matrix::Ones(2, 1);
    Vector far = posterior(apart, Vector{{0.0}});
    CHECK(far[0] > 1.0 - 1e-6);

    CHECK_THROWS_AS(posterior(apart, Vector::Zero(3)), DataError);
}

TEST_CASE("posterior normalization property") {
    Rng rng(4);
    std::normal_distribution<double> g;
    GmmModel m;
    m.K = 5;
    m.dim = 3;
    m.weights = Vector::Constant(5, 0.2);
    m.means = Matrix::Random(5, 3) * 3.0;
    m.stds = Matrix::Random(5, 3).cwiseAbs() + Matrix::Constant(5, 3, 0.2);
    for (int trial = 0; trial < 100; ++trial) {
        Vector x(3);
        for (int d = 0; d < 3; ++d) x[d] = 20.0 * g(rng);
        Vector p = posterior(m, x);
        CHECK(std::abs(p.sum() - 1.0) < 1e-9);
        CHECK((p.array() >= 0).all());
    }
}

TEST_CASE("posterior permutation equivariance") {
    GmmModel m;
    m.K = 3;
    m.dim = 2;
    m.weights = Vector{{0.5, 0.3, 0.2}};
    m.means = Matrix::Random(3, 2);
    m.stds = Matrix::Random(3, 2).cwiseAbs() + Matrix::Constant(3, 2, 0.3);
    GmmModel perm = m;
    const int order[3] = {2, 0, 1};
    for (int k = 0; k < 3; ++k) {
        perm.weights[k] = m.weights[order[k]];
        perm.means.row(k) = m.means.row(order[k]);
        perm.stds.row(k) = m.stds.row(order[k]);
    }
    Vector x{{0.4, -0.7}};
    Vector p = posterior(m, x);
    Vector q = posterior(perm, x);
    for (int k = 0; k < 3; ++k) CHECK(q[k] == doctest::Approx(p[order[k]]).epsilon(1e-12));
}

TEST_CASE("log likelihood of the standard normal at zero") {
    GmmModel m;
    m.K = 1;
    m.dim = 1;
    m.weights = Vector::Ones(1);
    m.means = Matrix::Zero(1, 1);
    m.stds = Matrix::Ones(1, 1);
    Matrix x = Matrix::Zero(1, 1);
    CHECK(log_likelihood(m, x) == doctest::Approx(-0.9189385).epsilon(1e-6));

    Matrix data = Matrix::Random(10, 1);
    Matrix doubled(20, 1);
    doubled << data, data;
    CHECK(log_likelihood(m, doubled) ==
          doctest::Approx(2.0 * log_likelihood(m, data)).epsilon(1e-12));
}

TEST_CASE("EM log-likelihood is non-decreasing") {
    Rng rng(77);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
        Matrix data(300, 4);
        for (int i = 0; i < 300; ++i)
            for (int d = 0; d < 4; ++d) data(i, d) = g(rng) + (i % 3);
        FitConfig cfg;
        cfg.K = 4;
        cfg.em_iters = 8;
        cfg.seed = trial;
        std::vector<double> trace;
        gmm_fit(data, cfg, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i)
            CHECK(trace[i] >= trace[i - 1] - 1e-8 * std::abs(trace[i - 1]));
    }
}

TEST_CASE("fit rejects bad input") {
    FitConfig cfg;
    cfg.K = 4;
    CHECK_THROWS_AS(gmm_fit(Matrix(0, 3), cfg), DataError);
    CHECK_THROWS_AS(gmm_fit(Matrix::Random(3, 3), cfg), DataError);
}

TEST_CASE("fit is deterministic in the seed") {
    Matrix data = two_clusters(100, 3, 2.0, 9);
    FitConfig cfg;
    cfg.K = 3;
    cfg.em_iters = 4;
    cfg.seed = 123;
    GmmModel a = gmm_fit(data, cfg);
    GmmModel b = gmm_fit(data, cfg);
    CHECK(a.means == b.means);
    CHECK(a.stds == b.stds);
    CHECK(a.weights == b.weights);
}
