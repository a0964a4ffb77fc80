#include "fvstack/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fvstack::net {

namespace {

constexpr double kClampLo = 1e-12;
constexpr double kClampHi = 1.0 - 1e-12;

Matrix apply_nonlin(Nonlinearity g, const Matrix& z) {
    switch (g) {
        case Nonlinearity::relu:
            return z.cwiseMax(0.0);
        case Nonlinearity::none:
            return z;
        case Nonlinearity::sigmoid:
            return (1.0 / (1.0 + (-z.array()).exp())).matrix();
        case Nonlinearity::softmax: {
            Matrix out(z.rows(), z.cols());
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                const double mx = z.row(i).maxCoeff();
                Eigen::ArrayXd e = (z.row(i).array() - mx).exp();
                out.row(i) = (e / e.sum()).matrix();
            }
            return out;
        }
    }
    throw NumericError("unknown nonlinearity");
}

}  // namespace

void MlpModel::validate() const {
    if (layers.empty()) throw ConfigError("mlp: no layers");
    for (std::size_t j = 0; j + 1 < layers.size(); ++j)
        if (layers[j].spec.out_dim != layers[j + 1].spec.in_dim)
            throw ConfigError("mlp: dimension chain break at layer " + std::to_string(j));
    const auto& out = layers.back().spec;
    if (out.has_bn) throw ConfigError("mlp: output layer must not use batch normalization");
    if (out.nonlin != Nonlinearity::softmax && out.nonlin != Nonlinearity::sigmoid)
        throw ConfigError("mlp: output nonlinearity must be softmax or sigmoid");
    if (task == Task::multiclass && out.nonlin != Nonlinearity::softmax)
        throw ConfigError("mlp: multiclass task requires a softmax output");
    for (const auto& l : layers) {
        if (l.spec.in_dim < 1 || l.spec.out_dim < 1)
            throw ConfigError("mlp: non-positive layer dimension");
        if (l.spec.dropout_p < 0.0 || l.spec.dropout_p >= 1.0)
            throw ConfigError("mlp: dropout_p must lie in [0,1)");
        if (!l.weights.allFinite() || !l.bias.allFinite())
            throw NumericError("mlp: non-finite parameters");
    }
}

MlpModel build_mlp(const std::vector<LayerSpec>& specs, Task task, std::uint64_t seed) {
    Rng rng(seed);
    MlpModel model;
    model.task = task;
    for (const auto& spec : specs) {
        Layer layer;
        layer.spec = spec;
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.in_dim));
        std::uniform_real_distribution<double> u(-scale, scale);
        layer.weights = Matrix(spec.out_dim, spec.in_dim);
        for (int r = 0; r < spec.out_dim; ++r)
            for (int c = 0; c < spec.in_dim; ++c) layer.weights(r, c) = u(rng);
        layer.bias = Vector::Zero(spec.out_dim);
        if (spec.has_bn) {
            layer.bn.gamma = Vector::Ones(spec.out_dim);
            layer.bn.beta = Vector::Zero(spec.out_dim);
            layer.bn.running_mean = Vector::Zero(spec.out_dim);
            layer.bn.running_var = Vector::Ones(spec.out_dim);
        }
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

MlpModel build_standard(int input_dim, int width, int depth, int classes, Task task,
                        double dropout_p, std::uint64_t seed) {
    std::vector<LayerSpec> specs;
    int in = input_dim;
    for (int j = 0; j < depth; ++j) {
        specs.push_back({in, width, true, Nonlinearity::relu, true, dropout_p});
        in = width;
    }
    specs.push_back({in, classes, false,
                     task == Task::multiclass ? Nonlinearity::softmax : Nonlinearity::sigmoid,
                     true, 0.0});
    return build_mlp(specs, task, seed);
}

Matrix forward(const MlpModel& model, const Matrix& batch, Mode mode, Rng* rng,
               ForwardCache* cache) {
    if (batch.cols() != model.input_dim())
        throw DataError("forward: input dim " + std::to_string(batch.cols()) +
                        " != " + std::to_string(model.input_dim()));
    const Eigen::Index n = batch.rows();
    if (mode == Mode::train) {
        for (const auto& l : model.layers)
            if (l.spec.has_bn && n < 2)
                throw DataError("forward: train-mode batch of size 1 with batch norm");
    }
    if (cache) cache->layers.assign(model.layers.size(), {});

    Matrix h = batch;
    for (std::size_t j = 0; j < model.layers.size(); ++j) {
        const auto& layer = model.layers[j];
        LayerCache lc;
        if (cache) lc.input = h;

        Matrix z = h * layer.weights.transpose();
        z.rowwise() += layer.bias.transpose();
        if (cache) lc.pre_bn = z;

        if (layer.spec.has_bn) {
            const auto& bn = layer.bn;
            Vector mu, var;
            if (mode == Mode::train) {
                mu = z.colwise().mean().transpose();
                var = ((z.rowwise() - mu.transpose()).array().square().colwise().sum() /
                       double(n))
                          .matrix()
                          .transpose();
            } else {
                mu = bn.running_mean;
                var = bn.running_var;
            }
            const Vector inv_std = (var.array() + bn.eps).rsqrt().matrix();
            Matrix xhat = (z.rowwise() - mu.transpose()) * inv_std.asDiagonal();
            z = xhat * bn.gamma.asDiagonal();
            z.rowwise() += bn.beta.transpose();
            if (cache) {
                lc.xhat = xhat;
                lc.batch_mean = mu;
                lc.batch_var = var;
            }
        }

        Matrix a = apply_nonlin(layer.spec.nonlin, z);
        if (cache) lc.post_nonlin = a;

        if (mode == Mode::train && layer.spec.dropout_p > 0.0) {
            if (!rng) throw ConfigError("forward: dropout in train mode needs an rng");
            const double keep = 1.0 - layer.spec.dropout_p;
            std::bernoulli_distribution coin(keep);
            Matrix mask(a.rows(), a.cols());
            for (Eigen::Index r = 0; r < a.rows(); ++r)
                for (Eigen::Index c = 0; c < a.cols(); ++c)
                    mask(r, c) = coin(*rng) ? 1.0 / keep : 0.0;
            a = a.cwiseProduct(mask);
            if (cache) lc.dropout_mask = mask;
        }

        if (cache) {
            lc.output = a;
            cache->layers[j] = std::move(lc);
        }
        h = std::move(a);
    }
    if (cache) cache->output = h;
    return h;
}

double loss_sum(const Matrix& yhat, const Matrix& y, Task task) {
    if (yhat.rows() != y.rows() || yhat.cols() != y.cols())
        throw DataError("loss: shape mismatch");
    const auto p = yhat.array().min(kClampHi).max(kClampLo);
    if (task == Task::multiclass) return -(y.array() * p.log()).sum();
    return -(y.array() * p.log() + (1.0 - y.array()) * (1.0 - p).log()).sum();
}

double loss_mean(const Matrix& yhat, const Matrix& y, Task task) {
    return loss_sum(yhat, y, task) / static_cast<double>(yhat.rows());
}

Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& targets) {
    if (cache.layers.size() != model.layers.size() || cache.layers.front().input.size() == 0)
        throw DataError("backward: forward cache missing");
    const Eigen::Index n = targets.rows();
    const std::size_t L = model.layers.size();
    Gradients g;
    g.d_weights.resize(L);
    g.d_bias.resize(L);
    g.d_gamma.resize(L);
    g.d_beta.resize(L);

    // softmax+CE and sigmoid+BCE share dZ = (yhat - y)/n for the mean loss
    Matrix dz = (cache.output - targets) / static_cast<double>(n);

    for (std::size_t jj = L; jj-- > 0;) {
        const auto& layer = model.layers[jj];
        const auto& lc = cache.layers[jj];

        if (jj + 1 < L) {
            // dz currently holds d(post-layer output); peel dropout + nonlin + BN
            Matrix da = dz;
            if (lc.dropout_mask.size() > 0) da = da.cwiseProduct(lc.dropout_mask);
            Matrix dg;
            switch (layer.spec.nonlin) {
                case Nonlinearity::relu:
                    dg = da.cwiseProduct(
                        (lc.post_nonlin.array() > 0.0).cast<double>().matrix());
                    break;
                case Nonlinearity::none:
                    dg = da;
                    break;
                case Nonlinearity::sigmoid:
                    dg = da.cwiseProduct(
                        (lc.post_nonlin.array() * (1.0 - lc.post_nonlin.array())).matrix());
                    break;
                case Nonlinearity::softmax:
                    throw ConfigError("backward: softmax only supported at the output layer");
            }
            if (layer.spec.has_bn) {
                const auto& bn = layer.bn;
                const Eigen::Index m = dg.rows();
                const Vector inv_std = (lc.batch_var.array() + bn.eps).rsqrt().matrix();
                if (layer.spec.trainable) {
                    g.d_gamma[jj] = dg.cwiseProduct(lc.xhat).colwise().sum().transpose();
                    g.d_beta[jj] = dg.colwise().sum().transpose();
                }
                const Matrix dxhat = dg * bn.gamma.asDiagonal();
                // exact batch-statistics chain rule
                const Vector sum_dxhat = dxhat.colwise().sum().transpose();
                const Vector sum_dxhat_xhat =
                    dxhat.cwiseProduct(lc.xhat).colwise().sum().transpose();
                Matrix dzp = dxhat * double(m);
                dzp.rowwise() -= sum_dxhat.transpose();
                dzp -= lc.xhat * sum_dxhat_xhat.asDiagonal();
                dz = (dzp * inv_std.asDiagonal()) / double(m);
            } else {
                dz = dg;
            }
        }
        // here dz = d(loss)/d(pre-BN z) of layer jj
        if (layer.spec.trainable) {
            g.d_weights[jj] = dz.transpose() * lc.input;
            g.d_bias[jj] = dz.colwise().sum().transpose();
        }
        if (jj > 0) dz = (dz * layer.weights).eval();
    }
    return g;
}

double adam_scalar_update(double& m, double& v, std::int64_t t, double g,
                          const AdamConfig& cfg) {
    if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    if (cfg.paper_form) return cfg.alpha * m / (bc1 * std::sqrt(v / bc2) + cfg.eps);
    return cfg.alpha * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
}

AdamState make_adam_state(const MlpModel& model) {
    AdamState s;
    const std::size_t L = model.layers.size();
    s.m_weights.resize(L);
    s.v_weights.resize(L);
    s.m_bias.resize(L);
    s.v_bias.resize(L);
    s.m_gamma.resize(L);
    s.v_gamma.resize(L);
    s.m_beta.resize(L);
    s.v_beta.resize(L);
    for (std::size_t j = 0; j < L; ++j) {
        const auto& layer = model.layers[j];
        if (!layer.spec.trainable) continue;
        s.m_weights[j] = Matrix::Zero(layer.weights.rows(), layer.weights.cols());
        s.v_weights[j] = s.m_weights[j];
        s.m_bias[j] = Vector::Zero(layer.bias.size());
        s.v_bias[j] = s.m_bias[j];
        if (layer.spec.has_bn) {
            s.m_gamma[j] = Vector::Zero(layer.bn.gamma.size());
            s.v_gamma[j] = s.m_gamma[j];
            s.m_beta[j] = s.m_gamma[j];
            s.v_beta[j] = s.m_gamma[j];
        }
    }
    return s;
}

namespace {

template <typename Buf>
void adam_apply(Buf& param, Buf& m, Buf& v, const Buf& grad, std::int64_t t,
                const AdamConfig& cfg) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
        param.data()[i] -=
            adam_scalar_update(m.data()[i], v.data()[i], t, grad.data()[i], cfg);
    }
}

}  // namespace

void adam_step(AdamState& state, const AdamConfig& cfg, MlpModel& model,
               const Gradients& grads) {
    ++state.t;
    for (std::size_t j = 0; j < model.layers.size(); ++j) {
        auto& layer = model.layers[j];
        if (!layer.spec.trainable || grads.d_weights[j].size() == 0) continue;
        adam_apply(layer.weights, state.m_weights[j], state.v_weights[j], grads.d_weights[j],
                   state.t, cfg);
        adam_apply(layer.bias, state.m_bias[j], state.v_bias[j], grads.d_bias[j], state.t,
                   cfg);
        if (layer.spec.has_bn && grads.d_gamma[j].size() > 0) {
            adam_apply(layer.bn.gamma, state.m_gamma[j], state.v_gamma[j], grads.d_gamma[j],
                       state.t, cfg);
            adam_apply(layer.bn.beta, state.m_beta[j], state.v_beta[j], grads.d_beta[j],
                       state.t, cfg);
        }
    }
}

namespace {

double accuracy_of(const Matrix& scores, const Matrix& targets, Task task) {
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        if (task == Task::multiclass) {
            Eigen::Index p, t;
            scores.row(i).maxCoeff(&p);
            targets.row(i).maxCoeff(&t);
            correct += (p == t);
        } else {
            bool ok = true;
            for (Eigen::Index c = 0; c < scores.cols(); ++c)
                ok = ok && ((scores(i, c) > 0.5) == (targets(i, c) > 0.5));
            correct += ok;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

}  // namespace

std::vector<EpochStat> train(MlpModel& model, const Matrix& inputs, const Matrix& targets,
                             const TrainConfig& cfg) {
    if (inputs.rows() < 1) throw DataError("train: empty dataset");
    if (inputs.rows() != targets.rows()) throw DataError("train: inputs/targets mismatch");
    model.validate();

    const Eigen::Index n = inputs.rows();
    Rng rng(cfg.seed);
    AdamState adam = make_adam_state(model);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<EpochStat> trace;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - start);
            if (bs < 2 && std::any_of(model.layers.begin(), model.layers.end(),
                                      [](const Layer& l) { return l.spec.has_bn; }))
                continue;  // leftover singleton batch cannot feed BN
            Matrix bx(bs, inputs.cols()), by(bs, targets.cols());
            for (Eigen::Index i = 0; i < bs; ++i) {
                bx.row(i) = inputs.row(order[start + i]);
                by.row(i) = targets.row(order[start + i]);
            }
            ForwardCache cache;
            forward(model, bx, Mode::train, &rng, &cache);
            const Gradients grads = backward(model, cache, by);
            adam_step(adam, cfg.adam, model, grads);
            // fold batch statistics into the running estimates
            for (std::size_t j = 0; j < model.layers.size(); ++j) {
                auto& layer = model.layers[j];
                if (!layer.spec.has_bn) continue;
                auto& bn = layer.bn;
                bn.running_mean = bn.momentum * bn.running_mean +
                                  (1.0 - bn.momentum) * cache.layers[j].batch_mean;
                bn.running_var = bn.momentum * bn.running_var +
                                 (1.0 - bn.momentum) * cache.layers[j].batch_var;
            }
        }
        const Matrix scores = forward(model, inputs, Mode::infer);
        trace.push_back(
            {epoch, loss_mean(scores, targets, model.task), accuracy_of(scores, targets, model.task)});
    }
    return trace;
}

Matrix predict(const MlpModel& model, const Matrix& inputs) {
    return forward(model, inputs, Mode::infer);
}

TransferredModel replace_output_layer(const MlpModel& model, int new_class_count,
                                      std::uint64_t seed) {
    if (new_class_count < 2) throw ConfigError("replace_output_layer: need >= 2 classes");
    TransferredModel out;
    out.model = model;
    auto& last = out.model.layers.back();
    LayerSpec spec = last.spec;
    spec.out_dim = new_class_count;
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.in_dim));
    std::uniform_real_distribution<double> u(-scale, scale);
    last.spec = spec;
    last.weights = Matrix(new_class_count, spec.in_dim);
    for (int r = 0; r < new_class_count; ++r)
        for (int c = 0; c < spec.in_dim; ++c) last.weights(r, c) = u(rng);
    last.bias = Vector::Zero(new_class_count);
    out.finetune_adam = AdamConfig{};
    out.finetune_adam.alpha /= 10.0;
    return out;
}

Matrix one_hot(const std::vector<int>& labels, int classes) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes)
            throw DataError("one_hot: label out of range");
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return y;
}

}  // namespace fvstack::net
