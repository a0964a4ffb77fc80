#pragma once

#include <cstdint>
#include <vector>

#include "fvstack/common.hpp"

namespace fvstack::net {

enum class Nonlinearity { relu, softmax, sigmoid, none };
enum class Task { multiclass, multilabel };

struct LayerSpec {
    int in_dim = 0;
    int out_dim = 0;
    bool has_bn = false;
    Nonlinearity nonlin = Nonlinearity::relu;
    bool trainable = true;
    double dropout_p = 0.0;
};

struct BatchNormParams {
    Vector gamma, beta;
    Vector running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.99;  // running <- momentum*running + (1-momentum)*batch
};

struct Layer {
    LayerSpec spec;
    Matrix weights;  // out_dim x in_dim
    Vector bias;
    BatchNormParams bn;  // populated iff spec.has_bn
};

struct MlpModel {
    std::vector<Layer> layers;
    Task task = Task::multiclass;

    int input_dim() const { return layers.front().spec.in_dim; }
    int output_dim() const { return layers.back().spec.out_dim; }
    void validate() const;
};

// Symmetric uniform init scaled by 1/sqrt(fan_in), BN gamma=1 beta=0.
MlpModel build_mlp(const std::vector<LayerSpec>& specs, Task task, std::uint64_t seed);

// Convenience: `depth` hidden blocks of `width` (BN+ReLU+dropout) and one
// softmax/sigmoid output layer on top.
MlpModel build_standard(int input_dim, int width, int depth, int classes, Task task,
                        double dropout_p, std::uint64_t seed);

enum class Mode { train, infer };

// Everything backward() needs, retained per layer from a train-mode forward.
struct LayerCache {
    Matrix input;        // batch input to the layer
    Matrix pre_bn;       // z = W h + b
    Matrix xhat;         // BN-normalized z (if has_bn)
    Vector batch_mean, batch_var;
    Matrix post_nonlin;  // g(...)
    Matrix dropout_mask; // includes the 1/(1-p) scaling; empty if unused
    Matrix output;
};

struct ForwardCache {
    std::vector<LayerCache> layers;
    Matrix output;
};

Matrix forward(const MlpModel& model, const Matrix& batch, Mode mode, Rng* rng = nullptr,
               ForwardCache* cache = nullptr);

// Cross-entropy losses, summed over the batch (Eq. form). Predictions are
// clamped to [1e-12, 1-1e-12].
double loss_sum(const Matrix& yhat, const Matrix& y, Task task);
double loss_mean(const Matrix& yhat, const Matrix& y, Task task);

struct Gradients {
    std::vector<Matrix> d_weights;
    std::vector<Vector> d_bias;
    std::vector<Vector> d_gamma, d_beta;
};

// Exact gradients of the batch-averaged loss. Non-trainable layers get empty
// buffers; gradient still propagates through them to earlier layers.
Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& targets);

struct AdamConfig {
    double alpha = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // true: denominator is (1-b1^t)*sqrt(v/(1-b2^t)) + eps, as printed here;
    // false: conventional mhat/(sqrt(vhat)+eps).
    bool paper_form = true;
};

struct AdamState {
    std::int64_t t = 0;
    std::vector<Matrix> m_weights, v_weights;
    std::vector<Vector> m_bias, v_bias, m_gamma, v_gamma, m_beta, v_beta;
};

AdamState make_adam_state(const MlpModel& model);
void adam_step(AdamState& state, const AdamConfig& cfg, MlpModel& model,
               const Gradients& grads);

// Single-parameter update used by the optimizer and by closed-form tests.
double adam_scalar_update(double& m, double& v, std::int64_t t, double g,
                          const AdamConfig& cfg);

struct TrainConfig {
    int batch_size = 128;
    int epochs = 50;
    std::uint64_t seed = 0;
    AdamConfig adam;
};

struct EpochStat {
    int epoch;
    double loss;       // infer-mode mean loss over the training set
    double train_acc;  // multiclass argmax accuracy (or exact-match for multilabel)
};

std::vector<EpochStat> train(MlpModel& model, const Matrix& inputs, const Matrix& targets,
                             const TrainConfig& cfg);

Matrix predict(const MlpModel& model, const Matrix& inputs);

// Output-layer surgery for cross-dataset transfer; hidden layers keep their
// weights, fine-tuning is expected to run at alpha/10.
struct TransferredModel {
    MlpModel model;
    AdamConfig finetune_adam;  // alpha divided by 10
};
TransferredModel replace_output_layer(const MlpModel& model, int new_class_count,
                                      std::uint64_t seed);

Matrix one_hot(const std::vector<int>& labels, int classes);

}  // namespace fvstack::net
