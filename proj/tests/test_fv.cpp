#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "fvstack/fv.hpp"

using namespace fvstack;
using namespace fvstack::fv;

namespace {

gmm::GmmModel random_model(int K, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.2, 1.5);
    gmm::GmmModel m;
    m.K = K;
    m.dim = dim;
    m.weights = Vector(K);
    m.means = Matrix(K, dim);
    m.stds = Matrix(K, dim);
    for (int k = 0; k < K; ++k) {
        m.weights[k] = u(rng);
        for (int d = 0; d < dim; ++d) {
            m.means(k, d) = g(rng);
            m.stds(k, d) = u(rng);
        }
    }
    m.weights /= m.weights.sum();
    return m;
}

// Independent re-implementation of the per-row encoding used as the oracle:
// scalar loops, densities computed directly (no shared code path).
Vector naive_encode(const gmm::GmmModel& m, const Vector& x) {
    std::vector<double> joint(m.K);
    double total = 0;
    for (int k = 0; k < m.K; ++k) {
        double dens = 1.0;
        for (int d = 0; d < m.dim; ++d) {
            const double z = (x[d] - m.means(k, d)) / m.stds(k, d);
            dens *= std::exp(-0.5 * z * z) / (m.stds(k, d) * std::sqrt(2.0 * M_PI));
        }
        joint[k] = m.weights[k] * dens;
        total += joint[k];
    }
    Vector out(2 * m.K * m.dim);
    for (int k = 0; k < m.K; ++k) {
        const double gamma = joint[k] / total;
        for (int d = 0; d < m.dim; ++d) {
            const double z = (x[d] - m.means(k, d)) / m.stds(k, d);
            out[2 * k * m.dim + d] = gamma / std::sqrt(m.weights[k]) * z;
            out[(2 * k + 1) * m.dim + d] =
                gamma / std::sqrt(2.0 * m.weights[k]) * (z * z - 1.0);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("single standard Gaussian encodes its mean to [0, -1/sqrt(2)]") {
    gmm::GmmModel m;
    m.K = 1;
    m.dim = 1;
    m.weights = Vector::Ones(1);
    m.means = Matrix::Zero(1, 1);
    m.stds = Matrix::Ones(1, 1);
    Vector out = fv_encode_row(m, Vector::Zero(1));
    CHECK(out.size() == 2);
    CHECK(out[0] == doctest::Approx(0.0));
    CHECK(out[1] == doctest::Approx(-0.7071068).epsilon(1e-7));
}

TEST_CASE("first-order block vanishes at the dominant component mean") {
    gmm::GmmModel m = random_model(2, 3, 8);
    m.means.row(0) << 0, 0, 0;
    m.means.row(1) << 50, 50, 50;  // far away, negligible posterior
    Vector out = fv_encode_row(m, Vector::Zero(3));
    CHECK(out.segment(0, 3).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("encode length is 2KD") {
    gmm::GmmModel m = random_model(256, 18, 3);
    CHECK(fv_encode_row(m, Vector::Zero(18)).size() == 9216);
}

TEST_CASE("fv_pool equals the naive per-row oracle") {
    Rng rng(42);
    std::uniform_int_distribution<int> kd(1, 4), dd(1, 5), nd(1, 64);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 30; ++trial) {
        const int K = kd(rng), D = dd(rng), n = nd(rng);
        gmm::GmmModel m = random_model(K, D, 1000 + trial);
        Matrix rows(n, D);
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < D; ++d) rows(i, d) = 2.0 * g(rng);
        Vector expect = Vector::Zero(2 * K * D);
        for (int i = 0; i < n; ++i) expect += naive_encode(m, rows.row(i));
        const FisherVector got = fv_pool(m, rows);
        const double denom = std::max(expect.norm(), 1e-30);
        CHECK((got.values - expect).norm() / denom < 1e-10);
    }
}

TEST_CASE("pooling is linear in row multiplicity") {
    gmm::GmmModel m = random_model(3, 2, 5);
    Matrix rows = Matrix::Random(10, 2);
    Matrix twice(20, 2);
    twice << rows, rows;
    CHECK((fv_pool(m, twice).values - 2.0 * fv_pool(m, rows).values)
              .lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((fv_pool(m, rows.topRows(1)).values - fv_encode_row(m, rows.row(0)))
              .lpNorm<Eigen::Infinity>() == 0.0);
    CHECK_THROWS_AS(fv_pool(m, Matrix(0, 2)), DataError);
}

TEST_CASE("signed sqrt and l2 basics") {
    Vector v{{4.0, -9.0}};
    Vector s = signed_sqrt(v);
    CHECK(s[0] == doctest::Approx(2.0));
    CHECK(s[1] == doctest::Approx(-3.0));
    CHECK(signed_sqrt(Vector::Zero(3)) == Vector::Zero(3));

    Vector u = l2_normalize(Vector{{3.0, 4.0}});
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[1] == doctest::Approx(0.8));
    CHECK((l2_normalize(u) - u).lpNorm<Eigen::Infinity>() < 1e-15);
    CHECK(l2_normalize(Vector::Zero(4)) == Vector::Zero(4));
}

TEST_CASE("double application equals a quarter power") {
    Rng rng(6);
    std::normal_distribution<double> g;
    Vector v(64);
    for (int i = 0; i < 64; ++i) v[i] = 3.0 * g(rng);
    Vector twice = signed_sqrt(signed_sqrt(v));
    for (int i = 0; i < 64; ++i) {
        const double expect = (v[i] < 0 ? -1.0 : 1.0) * std::pow(std::abs(v[i]), 0.25);
        CHECK(std::abs(twice[i] - expect) < 1e-12);
    }
}

TEST_CASE("finalize_video normalization chain") {
    gmm::GmmModel m = random_model(2, 3, 14);
    std::vector<FisherVector> pooled;
    pooled.push_back(fv_pool(m, Matrix::Random(7, 3), "a"));
    pooled.push_back(fv_pool(m, Matrix::Random(5, 3), "b"));
    VideoRepresentation rep = finalize_video(pooled, {"a", "b"});
    CHECK(rep.vector.size() == 24);
    CHECK(rep.vector.norm() == doctest::Approx(1.0).epsilon(1e-6));

    // all-equal positive entries flatten to 1/sqrt(2KD)
    FisherVector flat;
    flat.channel = "a";
    flat.values = Vector::Constant(12, 0.3);
    VideoRepresentation frep = finalize_video({flat}, {"a"});
    for (int i = 0; i < 12; ++i)
        CHECK(frep.vector[i] == doctest::Approx(1.0 / std::sqrt(12.0)).epsilon(1e-12));

    CHECK_THROWS_AS(finalize_video(pooled, {"b", "a"}), DataError);
    CHECK_THROWS_AS(finalize_video(pooled, {"a"}), DataError);
}

TEST_CASE("record permutation leaves the representation unchanged") {
    gmm::GmmModel m = random_model(3, 4, 99);
    Matrix rows = Matrix::Random(40, 4);
    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(3);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(40, 4);
    for (int i = 0; i < 40; ++i) shuffled.row(i) = rows.row(perm[i]);
    VideoRepresentation a = finalize_video({fv_pool(m, rows, "a")}, {"a"});
    VideoRepresentation b = finalize_video({fv_pool(m, shuffled, "a")}, {"a"});
    CHECK((a.vector - b.vector).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("FVR1 round trip") {
    VideoRepresentation rep;
    rep.labels = {0, 3};
    rep.vector = Vector(5);
    rep.vector << 0.5, -0.25, 0.125, 1.0, 0.0;
    const auto path =
        (std::filesystem::temp_directory_path() / "fvstack_rep.fvr").string();
    write_representation(rep, path);
    VideoRepresentation back = read_representation(path);
    CHECK(back.labels == rep.labels);
    CHECK(back.vector == rep.vector);
    std::remove(path.c_str());
}
