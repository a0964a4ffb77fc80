#pragma once

#include "fvstack/common.hpp"

namespace fvstack::reduction {

// PCA eigenbasis plus optional whitening. `basis` rows are orthonormal
// principal directions; `eigvals` are the matching scatter-matrix eigenvalues
// (descending). Whitening scales component i by sqrt(n / eigvals[i]) so the
// projected training data has identity population covariance.
struct ReductionModel {
    Vector mean;     // d
    Matrix basis;    // r x d
    Vector eigvals;  // r, descending, all > rank tolerance
    double n_train = 0;
    bool whiten = false;

    int input_dim() const { return static_cast<int>(mean.size()); }
    int output_dim() const { return static_cast<int>(basis.rows()); }
};

// Target dimension given either as a count or a variance fraction in (0,1].
struct PcaTarget {
    int r = -1;
    double variance_fraction = -1.0;

    static PcaTarget dims(int r) { return {r, -1.0}; }
    static PcaTarget fraction(double f) { return {-1, f}; }
};

// Chooses the covariance eigenproblem when n >= d and the Gram-matrix path
// when n < d; both agree up to component sign.
ReductionModel pca_fit(const Matrix& rows, PcaTarget target, bool whiten);

Matrix project(const ReductionModel& model, const Matrix& rows);

// Fixed first-layer weights for the supervised head: y = l2norm(W x + b).
// Requires a whitened model; callers treat W,b as non-trainable.
struct ReductionLayer {
    Matrix weights;  // r x d
    Vector offset;   // r
};
ReductionLayer reduction_layer_weights(const ReductionModel& model);

// Applies the layer including the trailing l2 normalization.
Matrix apply_reduction_layer(const ReductionLayer& layer, const Matrix& rows);

}  // namespace fvstack::reduction
