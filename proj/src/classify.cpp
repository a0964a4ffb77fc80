#include "fvstack/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fvstack::classify {

double svm_objective(const Vector& w, double b, const Matrix& X, const Vector& y, double C) {
    const Vector margins = Vector::Ones(X.rows()) - y.cwiseProduct(X * w + Vector::Constant(X.rows(), b));
    return 0.5 * w.squaredNorm() + C * margins.cwiseMax(0.0).sum();
}

namespace {

// One binary problem. Full-batch subgradient with halving on non-descent.
void train_binary(const Matrix& X, const Vector& y, double C, const SvmTrainConfig& cfg,
                  Vector& w, double& b) {
    const Eigen::Index n = X.rows();
    w = Vector::Zero(X.cols());
    b = 0.0;
    double obj = svm_objective(w, b, X, y, C);
    double eta = 1.0 / (C * double(n) + 1.0);
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const Vector f = X * w + Vector::Constant(n, b);
        Vector gw = w;
        double gb = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (y[i] * f[i] < 1.0) {
                gw -= C * y[i] * X.row(i).transpose();
                gb -= C * y[i];
            }
        }
        const Vector w_new = w - eta * gw;
        const double b_new = b - eta * gb;
        const double obj_new = svm_objective(w_new, b_new, X, y, C);
        if (obj_new <= obj) {
            const double rel = (obj - obj_new) / std::max(obj, 1e-300);
            w = w_new;
            b = b_new;
            obj = obj_new;
            eta *= 1.05;
            if (rel < cfg.tol) break;
        } else {
            eta *= 0.5;
            if (eta < 1e-18) break;
        }
    }
}

}  // namespace

LinearSvmModel svm_train(const Matrix& X, const std::vector<std::set<int>>& labels,
                         int num_classes, const SvmTrainConfig& cfg) {
    if (num_classes < 2) throw ConfigError("svm_train: need at least 2 classes");
    if (X.rows() == 0) throw DataError("svm_train: no training rows");
    if (static_cast<Eigen::Index>(labels.size()) != X.rows())
        throw DataError("svm_train: label/row count mismatch");
    LinearSvmModel model;
    model.C = cfg.C;
    model.weights = Matrix::Zero(num_classes, X.cols());
    model.bias = Vector::Zero(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        Vector y(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            y[i] = labels[i].count(c) ? 1.0 : -1.0;
        Vector w;
        double b;
        train_binary(X, y, cfg.C, cfg, w, b);
        model.weights.row(c) = w.transpose();
        model.bias[c] = b;
    }
    return model;
}

Matrix svm_scores(const LinearSvmModel& model, const Matrix& X) {
    if (X.cols() != model.weights.cols()) throw DataError("svm_scores: dimension mismatch");
    Matrix s = X * model.weights.transpose();
    s.rowwise() += model.bias.transpose();
    return s;
}

double average_precision(const std::vector<double>& scores,
                         const std::vector<bool>& relevance) {
    if (scores.size() != relevance.size()) throw DataError("average_precision: length mismatch");
    const std::size_t n = scores.size();
    std::size_t positives = std::count(relevance.begin(), relevance.end(), true);
    if (positives == 0) return 0.0;  // class absent from the ranking
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < n; ++rank) {
        if (relevance[order[rank]]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(positives);
}

EvalReport evaluate(const Matrix& scores, const std::vector<std::set<int>>& labels,
                    int num_classes, Protocol protocol,
                    const std::vector<std::vector<int>>& splits, int negative_class) {
    if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
        throw DataError("evaluate: label/score count mismatch");
    EvalReport report;
    if (protocol == Protocol::mAcc) {
        std::vector<std::vector<int>> groups = splits;
        if (groups.empty()) {
            groups.emplace_back(scores.rows());
            std::iota(groups.back().begin(), groups.back().end(), 0);
        }
        for (const auto& split : groups) {
            Eigen::Index correct = 0;
            for (int i : split) {
                Eigen::Index pred;
                scores.row(i).maxCoeff(&pred);
                correct += labels[i].count(static_cast<int>(pred)) > 0;
            }
            report.split_acc.push_back(static_cast<double>(correct) /
                                       static_cast<double>(split.size()));
        }
        const double mean =
            std::accumulate(report.split_acc.begin(), report.split_acc.end(), 0.0) /
            static_cast<double>(report.split_acc.size());
        double var = 0.0;
        for (double a : report.split_acc) var += (a - mean) * (a - mean);
        report.mean_acc = mean;
        report.sd_acc = std::sqrt(var / static_cast<double>(report.split_acc.size()));
        return report;
    }

    report.per_class_ap.assign(num_classes, -1.0);
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        if (protocol == Protocol::mAP_positives_only && c == negative_class) continue;
        std::vector<double> s(scores.rows());
        std::vector<bool> rel(scores.rows());
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
            s[i] = scores(i, c);
            rel[i] = labels[i].count(c) > 0;
        }
        report.per_class_ap[c] = average_precision(s, rel);
        sum += report.per_class_ap[c];
        ++counted;
    }
    if (counted == 0) throw ConfigError("evaluate: no classes left to average");
    report.map = sum / counted;
    return report;
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    if (!per_class_ap.empty()) {
        os << "class        AP\n";
        for (std::size_t c = 0; c < per_class_ap.size(); ++c) {
            if (per_class_ap[c] < 0) continue;
            os << "  " << c << "      " << per_class_ap[c] << "\n";
        }
        os << "mAP      " << map << "\n";
    }
    if (mean_acc >= 0) {
        os << "splits   ";
        for (double a : split_acc) os << a << " ";
        os << "\nmAcc     " << mean_acc << " (sd " << sd_acc << ")\n";
    }
    return os.str();
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    if (!per_class_ap.empty()) {
        os << "class,ap\n";
        for (std::size_t c = 0; c < per_class_ap.size(); ++c)
            if (per_class_ap[c] >= 0) os << c << "," << per_class_ap[c] << "\n";
        os << "summary,mAP=" << map << "\n";
    } else {
        os << "split,accuracy\n";
        for (std::size_t s = 0; s < split_acc.size(); ++s)
            os << s << "," << split_acc[s] << "\n";
        os << "summary,mAcc=" << mean_acc << ",sd=" << sd_acc << "\n";
    }
    return os.str();
}

}  // namespace fvstack::classify
