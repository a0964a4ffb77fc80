#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fvstack/common.hpp"
#include "fvstack/descriptor_io.hpp"

namespace fvstack::gmm {

// Diagonal-covariance mixture. Rows of means/stds are components.
struct GmmModel {
    int K = 0;
    int dim = 0;
    Vector weights;  // simplex, all > 0
    Matrix means;    // K x dim
    Matrix stds;     // K x dim, per-dimension standard deviations

    void validate() const;
};

struct FitConfig {
    int K = 256;
    int em_iters = 10;
    int sample_size = 256000;
    std::uint64_t seed = 0;
    double variance_floor = 1e-4;  // fraction of global column variance
};

// Uniform label-agnostic sample of descriptor rows from the given channel,
// without replacement when the pool is large enough.
Matrix sample_training_pool(const std::vector<desc::DescriptorSet>& sets,
                            const std::string& channel, int n, std::uint64_t seed);

// Same sampling over arbitrary pre-assembled rows.
Matrix sample_rows(const Matrix& pool, int n, std::uint64_t seed);

// k-means++ seeding, one hard-assignment variance estimate, then EM.
// Records the log-likelihood before EM and after every iteration.
GmmModel gmm_fit(const Matrix& data, const FitConfig& cfg,
                 std::vector<double>* ll_trace = nullptr);

// Soft assignment vector, computed with a log-space softmax.
Vector posterior(const GmmModel& model, const Vector& x);

// Per-component log w_k + log N(x; mu_k, sigma_k^2), before normalization.
Vector component_log_joint(const GmmModel& model, const Vector& x);

double log_likelihood(const GmmModel& model, const Matrix& data);

}  // namespace fvstack::gmm
