#include "fvstack/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace fvstack::gmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

// Row-wise log N(x_i; mu_k, sigma_k^2) for all components: n x K.
Matrix log_density_all(const GmmModel& m, const Matrix& data) {
    const Eigen::Index n = data.rows();
    Matrix out(n, m.K);
    const Matrix inv_std = m.stds.cwiseInverse();
    Vector log_norm(m.K);  // -0.5*D*log(2pi) - sum log sigma
    for (int k = 0; k < m.K; ++k)
        log_norm[k] = -0.5 * m.dim * kLog2Pi - m.stds.row(k).array().log().sum();
    for (int k = 0; k < m.K; ++k) {
        const auto z = (data.rowwise() - m.means.row(k)) * inv_std.row(k).asDiagonal();
        out.col(k) = (-0.5 * z.array().square().rowwise().sum() + log_norm[k]).matrix();
    }
    return out;
}

Vector log_sum_exp_rows(const Matrix& log_joint) {
    const Vector mx = log_joint.rowwise().maxCoeff();
    return ((log_joint.colwise() - mx).array().exp().rowwise().sum().log() + mx.array())
        .matrix();
}

}  // namespace

void GmmModel::validate() const {
    if (K < 1 || dim < 1) throw NumericError("gmm: empty model");
    if (std::abs(weights.sum() - 1.0) > 1e-9 || (weights.array() <= 0).any())
        throw NumericError("gmm: weights not a positive simplex vector");
    if (!means.allFinite() || !stds.allFinite() || (stds.array() <= 0).any())
        throw NumericError("gmm: non-finite or non-positive parameters");
}

Matrix sample_rows(const Matrix& pool, int n, std::uint64_t seed) {
    if (pool.rows() < 1) throw DataError("sample: empty pool");
    Rng rng(seed);
    const Eigen::Index total = pool.rows();
    Matrix out(n, pool.cols());
    if (n <= total) {
        // partial Fisher-Yates over an index array
        std::vector<Eigen::Index> idx(total);
        for (Eigen::Index i = 0; i < total; ++i) idx[i] = i;
        for (int i = 0; i < n; ++i) {
            std::uniform_int_distribution<Eigen::Index> pick(i, total - 1);
            std::swap(idx[i], idx[pick(rng)]);
            out.row(i) = pool.row(idx[i]);
        }
    } else {
        std::uniform_int_distribution<Eigen::Index> pick(0, total - 1);
        for (int i = 0; i < n; ++i) out.row(i) = pool.row(pick(rng));
    }
    return out;
}

Matrix sample_training_pool(const std::vector<desc::DescriptorSet>& sets,
                            const std::string& channel, int n, std::uint64_t seed) {
    Eigen::Index total = 0;
    int cdim = -1;
    std::vector<int> ch_index(sets.size());
    for (std::size_t s = 0; s < sets.size(); ++s) {
        ch_index[s] = sets[s].channel_index(channel);
        cdim = sets[s].channels[ch_index[s]].raw_dim;
        total += static_cast<Eigen::Index>(sets[s].records.size());
    }
    if (total < 1) throw DataError("sample_training_pool: no records");
    Matrix pool(total, cdim);
    Eigen::Index r = 0;
    for (std::size_t s = 0; s < sets.size(); ++s)
        for (const auto& rec : sets[s].records)
            pool.row(r++) = rec.values[ch_index[s]].transpose();
    return sample_rows(pool, n, seed);
}

GmmModel gmm_fit(const Matrix& data, const FitConfig& cfg, std::vector<double>* ll_trace) {
    const Eigen::Index n = data.rows();
    const int dim = static_cast<int>(data.cols());
    if (n < 1) throw DataError("gmm_fit: empty data");
    if (n < cfg.K) throw DataError("gmm_fit: fewer rows than components");
    if (!data.allFinite()) throw DataError("gmm_fit: non-finite data");

    const Vector col_mean = data.colwise().mean().transpose();
    Vector global_var =
        ((data.rowwise() - col_mean.transpose()).array().square().colwise().sum() / double(n))
            .matrix()
            .transpose();
    // degenerate constant columns still need a usable floor
    const double var_scale = std::max(global_var.maxCoeff(), 1e-12);
    for (int d = 0; d < dim; ++d)
        if (global_var[d] <= 0) global_var[d] = var_scale;
    const Vector floor_var = cfg.variance_floor * global_var;

    Rng rng(cfg.seed);

    // k-means++ seeding
    Matrix centers(cfg.K, dim);
    {
        std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
        centers.row(0) = data.row(first(rng));
        Vector d2 = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
        for (int k = 1; k < cfg.K; ++k) {
            const double total = d2.sum();
            Eigen::Index chosen = 0;
            if (total > 0) {
                std::uniform_real_distribution<double> u(0.0, total);
                double target = u(rng), acc = 0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= target) {
                        chosen = i;
                        break;
                    }
                }
            } else {
                std::uniform_int_distribution<Eigen::Index> any(0, n - 1);
                chosen = any(rng);
            }
            centers.row(k) = data.row(chosen);
            d2 = d2.cwiseMin((data.rowwise() - centers.row(k)).rowwise().squaredNorm());
        }
    }

    GmmModel m;
    m.K = cfg.K;
    m.dim = dim;
    m.means = centers;
    m.weights = Vector::Constant(cfg.K, 1.0 / cfg.K);
    m.stds = Matrix(cfg.K, dim);

    // one hard assignment pass for initial weights and variances
    {
        std::vector<int> assign(n);
        Vector counts = Vector::Zero(cfg.K);
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::max();
            for (int k = 0; k < cfg.K; ++k) {
                const double d2v = (data.row(i) - centers.row(k)).squaredNorm();
                if (d2v < bd) {
                    bd = d2v;
                    best = k;
                }
            }
            assign[i] = best;
            counts[best] += 1;
        }
        Matrix sq = Matrix::Zero(cfg.K, dim);
        for (Eigen::Index i = 0; i < n; ++i)
            sq.row(assign[i]) +=
                (data.row(i) - centers.row(assign[i])).array().square().matrix();
        for (int k = 0; k < cfg.K; ++k) {
            const double c = std::max(counts[k], 1.0);
            m.weights[k] = std::max(counts[k] / double(n), 1.0 / (cfg.K * double(n)));
            for (int d = 0; d < dim; ++d)
                m.stds(k, d) = std::sqrt(std::max(sq(k, d) / c, floor_var[d]));
        }
        m.weights /= m.weights.sum();
    }

    if (ll_trace) ll_trace->push_back(log_likelihood(m, data));

    for (int it = 0; it < cfg.em_iters; ++it) {
        // E-step
        Matrix log_joint = log_density_all(m, data);
        log_joint.rowwise() += m.weights.array().log().matrix().transpose();
        const Vector lse = log_sum_exp_rows(log_joint);
        Matrix resp = (log_joint.colwise() - lse).array().exp().matrix();

        // M-step
        Vector nk = resp.colwise().sum().transpose();
        for (int k = 0; k < m.K; ++k) {
            if (nk[k] < 1e-10 * double(n)) {
                // rescue: reseed dead component at the worst-explained point
                Eigen::Index worst;
                lse.minCoeff(&worst);
                m.means.row(k) = data.row(worst);
                for (int d = 0; d < dim; ++d)
                    m.stds(k, d) = std::sqrt(global_var[d]);
                m.weights[k] = 1.0 / double(n);
                continue;
            }
            m.means.row(k) = (resp.col(k).transpose() * data) / nk[k];
            const auto centered = data.rowwise() - m.means.row(k);
            Vector var =
                ((centered.array().square().colwise() * resp.col(k).array()).colwise().sum() /
                 nk[k])
                    .matrix()
                    .transpose();
            for (int d = 0; d < dim; ++d)
                m.stds(k, d) = std::sqrt(std::max(var[d], floor_var[d]));
            m.weights[k] = nk[k] / double(n);
        }
        m.weights /= m.weights.sum();
        if (ll_trace) ll_trace->push_back(log_likelihood(m, data));
    }

    m.validate();
    return m;
}

Vector component_log_joint(const GmmModel& model, const Vector& x) {
    if (x.size() != model.dim) throw DataError("posterior: dimension mismatch");
    Vector out(model.K);
    for (int k = 0; k < model.K; ++k) {
        const auto z = (x.transpose() - model.means.row(k)).cwiseQuotient(model.stds.row(k));
        out[k] = std::log(model.weights[k]) - 0.5 * model.dim * kLog2Pi -
                 model.stds.row(k).array().log().sum() - 0.5 * z.squaredNorm();
    }
    return out;
}

Vector posterior(const GmmModel& model, const Vector& x) {
    Vector lj = component_log_joint(model, x);
    const double mx = lj.maxCoeff();
    Vector e = (lj.array() - mx).exp();
    return e / e.sum();
}

double log_likelihood(const GmmModel& model, const Matrix& data) {
    if (data.cols() != model.dim) throw DataError("log_likelihood: dimension mismatch");
    Matrix log_joint = log_density_all(model, data);
    log_joint.rowwise() += model.weights.array().log().matrix().transpose();
    return log_sum_exp_rows(log_joint).sum();
}

}  // namespace fvstack::gmm
