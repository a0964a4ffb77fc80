#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fvstack/common.hpp"

namespace fvstack::classify {

// One-vs-rest linear SVMs, one weight row per class.
struct LinearSvmModel {
    Matrix weights;  // classes x dim
    Vector bias;     // classes
    double C = 100.0;
};

struct SvmTrainConfig {
    double C = 100.0;
    int max_epochs = 2000;
    double tol = 1e-6;  // relative objective change
    std::uint64_t seed = 0;
};

// 0.5*||w||^2 + C * sum hinge, for one binary problem (y in {-1,+1}).
double svm_objective(const Vector& w, double b, const Matrix& X, const Vector& y, double C);

// Deterministic full-batch subgradient descent with a monotone step-size
// backtracking rule; objective never increases across epochs.
LinearSvmModel svm_train(const Matrix& X, const std::vector<std::set<int>>& labels,
                         int num_classes, const SvmTrainConfig& cfg = {});

Matrix svm_scores(const LinearSvmModel& model, const Matrix& X);

// Mean over positives of precision at each positive's rank; stable sort keeps
// tied scores in input order.
double average_precision(const std::vector<double>& scores, const std::vector<bool>& relevance);

enum class Protocol { mAcc, mAP, mAP_positives_only };

struct EvalReport {
    std::vector<double> per_class_ap;  // indexed by class, -1 for excluded classes
    double map = -1.0;
    std::vector<double> split_acc;
    double mean_acc = -1.0;
    double sd_acc = 0.0;

    std::string to_text() const;
    std::string to_csv() const;
};

// `splits` partitions row indices for mAcc; one implicit split when empty.
// `negative_class` is excluded from the AP average in mAP+ mode.
EvalReport evaluate(const Matrix& scores, const std::vector<std::set<int>>& labels,
                    int num_classes, Protocol protocol,
                    const std::vector<std::vector<int>>& splits = {},
                    int negative_class = -1);

}  // namespace fvstack::classify
