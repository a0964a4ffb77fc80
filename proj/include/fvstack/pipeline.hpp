#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fvstack/classify.hpp"
#include "fvstack/common.hpp"
#include "fvstack/descriptor_io.hpp"
#include "fvstack/fv.hpp"
#include "fvstack/gmm.hpp"
#include "fvstack/net.hpp"
#include "fvstack/reduction.hpp"

namespace fvstack::pipeline {

enum class ReductionMode { none, unsupervised_pca, supervised_midtoend };
enum class ClassifierKind { none, mlp, svm };

struct PipelineConfig {
    std::vector<desc::ChannelSpec> channels;

    // DAFS variant family; default {skip 1,2,3} x {plain, mirrored}
    std::vector<desc::TransformTag> dafs_variants;
    int mirror_channel = 0;
    int mirror_flip_dims = 0;

    gmm::FitConfig gmm;
    int pca_factor = 2;  // descriptor-level dimensionality divisor

    ReductionMode reduction_mode = ReductionMode::unsupervised_pca;
    int reduction_r = -1;               // explicit output dim, or
    double reduction_fraction = 0.99;   // variance-mass target when r < 0

    ClassifierKind classifier = ClassifierKind::mlp;
    int depth = 2;
    int width = 4096;
    double dropout_p = 0.5;
    int batch_size = 128;
    int epochs = 50;
    net::Task task = net::Task::multiclass;
    int num_classes = 0;  // 0 = infer from labels
    net::AdamConfig adam;
    double svm_c = 100.0;

    int bag_count = 8;
    classify::Protocol protocol = classify::Protocol::mAcc;
    int negative_class = -1;

    desc::SynthSpec synth;

    std::vector<int> sweep_batches{128, 256, 512};
    std::vector<int> sweep_widths{512, 1024, 2048, 4096};
    std::vector<int> sweep_depths{1, 2, 3, 4};
    std::vector<double> sweep_dropouts{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    std::uint64_t seed = 42;
    int threads = 1;
    bool deterministic = true;

    std::map<std::string, std::string> raw;  // flat key-value snapshot

    static PipelineConfig defaults();
    static PipelineConfig from_map(const std::map<std::string, std::string>& kv);
    static PipelineConfig load(const std::string& path);
    static PipelineConfig parse(const std::string& text);
    void set(const std::string& key, const std::string& value);  // re-derives fields
    std::string to_text() const;
    std::vector<std::string> channel_names() const;
};

// Everything needed to take a raw descriptor file to class scores.
struct ModelContainer {
    PipelineConfig config;
    // unsupervised stage, aligned with config.channels
    std::vector<reduction::ReductionModel> channel_pca;
    std::vector<gmm::GmmModel> channel_gmm;
    // optional representation-level reduction (frozen first layer)
    std::optional<reduction::ReductionModel> rep_reduction;
    ClassifierKind classifier = ClassifierKind::none;
    std::vector<net::MlpModel> nets;  // 1 entry, or bag_count for an ensemble
    std::optional<classify::LinearSvmModel> svm;

    bool has_unsupervised() const { return !channel_gmm.empty(); }
    void validate() const;  // stage-dimension chaining
};

void save_container(const ModelContainer& c, const std::string& path);
ModelContainer load_container(const std::string& path);

// fit-unsup: per channel rootsift -> PCA (dim/pca_factor) -> STA -> GMM.
ModelContainer fit_unsupervised(const std::vector<desc::DescriptorSet>& train,
                                const PipelineConfig& cfg);

fv::VideoRepresentation encode_video(const ModelContainer& c, const desc::DescriptorSet& set,
                                     bool dafs);
std::vector<fv::VideoRepresentation> encode(const ModelContainer& c,
                                            const std::vector<desc::DescriptorSet>& sets,
                                            bool dafs, int threads = 1);

struct TrainOptions {
    // transfer support: reuse a frozen representation-level reduction and/or
    // start from an existing net (output layer already replaced) at alpha/10
    std::optional<reduction::ReductionModel> fixed_reduction;
    std::optional<net::MlpModel> initial_net;
    std::optional<double> alpha_override;
};

void train_classifier(ModelContainer& c, const std::vector<fv::VideoRepresentation>& reps,
                      const PipelineConfig& cfg, const TrainOptions& opts = {});

void bag(ModelContainer& c, const std::vector<fv::VideoRepresentation>& reps,
         const PipelineConfig& cfg, int count);

ModelContainer transfer(const ModelContainer& source,
                        const std::vector<desc::DescriptorSet>& target_train,
                        const PipelineConfig& cfg, const std::set<std::string>& what);

Matrix predict_scores(const ModelContainer& c, const std::vector<fv::VideoRepresentation>& reps);

classify::EvalReport evaluate(const ModelContainer& c,
                              const std::vector<fv::VideoRepresentation>& reps,
                              classify::Protocol protocol, int negative_class = -1);

// One CSV row per (batch, width, depth, dropout) tuple with held-out accuracy.
std::string sweep(const PipelineConfig& cfg, const std::vector<fv::VideoRepresentation>& reps);

// Per-class precision-recall curves as SVG files under `dir`.
void write_pr_curves(const Matrix& scores, const std::vector<std::set<int>>& labels,
                     int num_classes, const std::string& dir);

std::vector<std::set<int>> rep_labels(const std::vector<fv::VideoRepresentation>& reps);
Matrix rep_matrix(const std::vector<fv::VideoRepresentation>& reps);
int infer_num_classes(const PipelineConfig& cfg, const std::vector<std::set<int>>& labels);

}  // namespace fvstack::pipeline
