#include "fvstack/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace fvstack::pipeline {

namespace {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mu;
    const int workers = std::min<std::size_t>(threads, n);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::uint64_t channel_seed(std::uint64_t base, std::size_t channel) {
    return base + 0x9e3779b97f4a7c15ULL * (channel + 1);
}

Matrix targets_matrix(const std::vector<std::set<int>>& labels, int classes, net::Task task) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].empty()) throw DataError("training video without labels");
        if (task == net::Task::multiclass && labels[i].size() != 1)
            throw DataError("multiclass task but video has multiple labels");
        for (int c : labels[i]) {
            if (c < 0 || c >= classes) throw DataError("label out of range");
            y(static_cast<Eigen::Index>(i), c) = 1.0;
        }
    }
    return y;
}

// rootsift + channel PCA + STA for every record of one channel
Matrix channel_rows(const ModelContainer& c, const desc::DescriptorSet& set, std::size_t ch) {
    const Eigen::Index n = static_cast<Eigen::Index>(set.records.size());
    const int raw_dim = set.channels[ch].raw_dim;
    Matrix raw(n, raw_dim);
    for (Eigen::Index i = 0; i < n; ++i)
        raw.row(i) = desc::rootsift(set.records[i].values[ch]).transpose();
    Matrix reduced = reduction::project(c.channel_pca[ch], raw);
    Matrix out(n, reduced.cols() + 3);
    out.leftCols(reduced.cols()) = reduced;
    for (Eigen::Index i = 0; i < n; ++i) {
        out(i, reduced.cols()) = set.records[i].x;
        out(i, reduced.cols() + 1) = set.records[i].y;
        out(i, reduced.cols() + 2) = set.records[i].t;
    }
    return out;
}

// Prepares classifier inputs, fitting or reusing the representation-level
// reduction as the config demands. Sets c.rep_reduction when one is used.
Matrix prepare_head_inputs(ModelContainer& c, const Matrix& X, const PipelineConfig& cfg,
                           const TrainOptions& opts) {
    const bool wants_reduction = cfg.reduction_mode != ReductionMode::none;
    if (opts.fixed_reduction) {
        c.rep_reduction = *opts.fixed_reduction;
    } else if (!c.rep_reduction && wants_reduction) {
        const auto target = cfg.reduction_r > 0
                                ? reduction::PcaTarget::dims(cfg.reduction_r)
                                : reduction::PcaTarget::fraction(cfg.reduction_fraction);
        c.rep_reduction = reduction::pca_fit(X, target, /*whiten=*/true);
    }
    if (c.rep_reduction && wants_reduction) {
        const auto layer = reduction::reduction_layer_weights(*c.rep_reduction);
        return reduction::apply_reduction_layer(layer, X);
    }
    c.rep_reduction.reset();
    return X;
}

}  // namespace

std::vector<std::set<int>> rep_labels(const std::vector<fv::VideoRepresentation>& reps) {
    std::vector<std::set<int>> out;
    out.reserve(reps.size());
    for (const auto& r : reps) out.push_back(r.labels);
    return out;
}

Matrix rep_matrix(const std::vector<fv::VideoRepresentation>& reps) {
    if (reps.empty()) throw DataError("no representations");
    Matrix X(static_cast<Eigen::Index>(reps.size()), reps.front().vector.size());
    for (std::size_t i = 0; i < reps.size(); ++i) {
        if (reps[i].vector.size() != X.cols())
            throw DataError("representation dim mismatch at " + reps[i].video_id);
        X.row(static_cast<Eigen::Index>(i)) = reps[i].vector.transpose();
    }
    return X;
}

int infer_num_classes(const PipelineConfig& cfg, const std::vector<std::set<int>>& labels) {
    if (cfg.num_classes > 0) return cfg.num_classes;
    int mx = -1;
    for (const auto& ls : labels)
        for (int c : ls) mx = std::max(mx, c);
    if (mx < 1) throw DataError("cannot infer class count from labels");
    return mx + 1;
}

ModelContainer fit_unsupervised(const std::vector<desc::DescriptorSet>& train,
                                const PipelineConfig& cfg) {
    if (train.empty()) throw DataError("fit_unsupervised: no training descriptors");
    for (const auto& set : train) {
        set.validate();
        if (set.channels.size() != cfg.channels.size())
            throw DataError("fit_unsupervised: channel count mismatch for " + set.video_id);
        for (std::size_t c = 0; c < cfg.channels.size(); ++c)
            if (set.channels[c].name != cfg.channels[c].name ||
                set.channels[c].raw_dim != cfg.channels[c].raw_dim)
                throw DataError("fit_unsupervised: channel spec mismatch for " + set.video_id);
    }

    ModelContainer out;
    out.config = cfg;
    out.channel_pca.resize(cfg.channels.size());
    out.channel_gmm.resize(cfg.channels.size());

    parallel_for(cfg.channels.size(), cfg.threads, [&](std::size_t ch) {
        const int raw_dim = cfg.channels[ch].raw_dim;
        Eigen::Index total = 0;
        for (const auto& set : train) total += static_cast<Eigen::Index>(set.records.size());
        if (total < 1) throw DataError("fit_unsupervised: no records");
        // keep the coordinates alongside the raw rows so STA can follow PCA
        Matrix pool(total, raw_dim + 3);
        Eigen::Index r = 0;
        for (const auto& set : train)
            for (const auto& rec : set.records) {
                pool.row(r).head(raw_dim) = rec.values[ch].transpose();
                pool(r, raw_dim) = rec.x;
                pool(r, raw_dim + 1) = rec.y;
                pool(r, raw_dim + 2) = rec.t;
                ++r;
            }
        const std::uint64_t seed = channel_seed(cfg.seed, ch);
        Matrix sample = gmm::sample_rows(pool, cfg.gmm.sample_size, seed);
        Matrix heads(sample.rows(), raw_dim);
        for (Eigen::Index i = 0; i < sample.rows(); ++i)
            heads.row(i) = desc::rootsift(sample.row(i).head(raw_dim).transpose()).transpose();

        const int target_dim = std::max(1, raw_dim / cfg.pca_factor);
        out.channel_pca[ch] =
            reduction::pca_fit(heads, reduction::PcaTarget::dims(target_dim), /*whiten=*/false);
        Matrix reduced = reduction::project(out.channel_pca[ch], heads);
        Matrix sta(reduced.rows(), reduced.cols() + 3);
        sta.leftCols(reduced.cols()) = reduced;
        sta.rightCols(3) = sample.rightCols(3);

        gmm::FitConfig fit = cfg.gmm;
        fit.seed = seed;
        out.channel_gmm[ch] = gmm::gmm_fit(sta, fit);
    });
    out.validate();
    return out;
}

fv::VideoRepresentation encode_video(const ModelContainer& c, const desc::DescriptorSet& set,
                                     bool dafs) {
    if (!c.has_unsupervised()) throw DataError("encode: container has no unsupervised stage");
    if (set.channels.size() != c.config.channels.size())
        throw DataError("encode: channel count mismatch for " + set.video_id);
    for (std::size_t ch = 0; ch < set.channels.size(); ++ch)
        if (set.channels[ch].name != c.config.channels[ch].name)
            throw DataError("encode: channel order mismatch for " + set.video_id);

    desc::DescriptorSet stacked;
    const desc::DescriptorSet* input = &set;
    if (dafs) {
        std::vector<std::pair<desc::TransformTag, desc::DescriptorSet>> variants;
        for (const auto& tag : c.config.dafs_variants)
            variants.emplace_back(
                tag, desc::make_variant(set, tag, c.config.mirror_channel,
                                        c.config.mirror_flip_dims));
        stacked = desc::dafs_stack(variants);
        input = &stacked;
    }
    if (input->records.empty()) throw DataError("encode: no records for " + set.video_id);

    std::vector<fv::FisherVector> pooled;
    for (std::size_t ch = 0; ch < c.config.channels.size(); ++ch) {
        const Matrix rows = channel_rows(c, *input, ch);
        pooled.push_back(fv::fv_pool(c.channel_gmm[ch], rows, c.config.channels[ch].name));
    }
    fv::VideoRepresentation rep = fv::finalize_video(pooled, c.config.channel_names());
    rep.video_id = set.video_id;
    rep.labels = set.labels;
    return rep;
}

std::vector<fv::VideoRepresentation> encode(const ModelContainer& c,
                                            const std::vector<desc::DescriptorSet>& sets,
                                            bool dafs, int threads) {
    std::vector<fv::VideoRepresentation> out(sets.size());
    parallel_for(sets.size(), threads,
                 [&](std::size_t i) { out[i] = encode_video(c, sets[i], dafs); });
    return out;
}

void train_classifier(ModelContainer& c, const std::vector<fv::VideoRepresentation>& reps,
                      const PipelineConfig& cfg, const TrainOptions& opts) {
    const Matrix X = rep_matrix(reps);
    const auto labels = rep_labels(reps);
    const int classes = infer_num_classes(cfg, labels);

    if (cfg.classifier == ClassifierKind::svm) {
        classify::SvmTrainConfig svm_cfg;
        svm_cfg.C = cfg.svm_c;
        svm_cfg.seed = cfg.seed;
        c.svm = classify::svm_train(X, labels, classes, svm_cfg);
        c.nets.clear();
        c.classifier = ClassifierKind::svm;
        return;
    }

    const Matrix inputs = prepare_head_inputs(c, X, cfg, opts);
    const Matrix targets = targets_matrix(labels, classes, cfg.task);

    // mid-to-end reduction learns the first projection supervisedly; the
    // memory-motivated width cap from the reference setup applies there
    int width = cfg.width;
    if (cfg.reduction_mode == ReductionMode::supervised_midtoend) width = std::min(width, 1024);

    net::MlpModel model =
        opts.initial_net
            ? *opts.initial_net
            : net::build_standard(static_cast<int>(inputs.cols()), width, cfg.depth, classes,
                                  cfg.task, cfg.dropout_p, cfg.seed);
    net::TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.epochs = cfg.epochs;
    tc.seed = cfg.seed;
    tc.adam = cfg.adam;
    if (opts.alpha_override) tc.adam.alpha = *opts.alpha_override;
    net::train(model, inputs, targets, tc);

    c.nets = {std::move(model)};
    c.svm.reset();
    c.classifier = ClassifierKind::mlp;
}

void bag(ModelContainer& c, const std::vector<fv::VideoRepresentation>& reps,
         const PipelineConfig& cfg, int count) {
    if (count < 1) throw ConfigError("bag: count must be >= 1");
    const Matrix X = rep_matrix(reps);
    const auto labels = rep_labels(reps);
    const int classes = infer_num_classes(cfg, labels);
    if (cfg.classifier != ClassifierKind::mlp)
        throw ConfigError("bag: only the mlp classifier supports bagging");

    const Matrix inputs = prepare_head_inputs(c, X, cfg, {});
    const Matrix targets = targets_matrix(labels, classes, cfg.task);
    int width = cfg.width;
    if (cfg.reduction_mode == ReductionMode::supervised_midtoend) width = std::min(width, 1024);

    std::vector<net::MlpModel> members(count);
    parallel_for(static_cast<std::size_t>(count), cfg.threads, [&](std::size_t i) {
        const std::uint64_t seed = cfg.seed + i;
        net::MlpModel m = net::build_standard(static_cast<int>(inputs.cols()), width, cfg.depth,
                                              classes, cfg.task, cfg.dropout_p, seed);
        net::TrainConfig tc;
        tc.batch_size = cfg.batch_size;
        tc.epochs = cfg.epochs;
        tc.seed = seed;
        tc.adam = cfg.adam;
        net::train(m, inputs, targets, tc);
        members[i] = std::move(m);
    });
    c.nets = std::move(members);
    c.svm.reset();
    c.classifier = ClassifierKind::mlp;
}

ModelContainer transfer(const ModelContainer& source,
                        const std::vector<desc::DescriptorSet>& target_train,
                        const PipelineConfig& cfg, const std::set<std::string>& what) {
    for (const auto& w : what)
        if (w != "gmm" && w != "reduction" && w != "supervised")
            throw ConfigError("transfer: unknown stage '" + w + "'");

    ModelContainer out;
    if (what.count("gmm")) {
        if (!source.has_unsupervised())
            throw DataError("transfer: source has no unsupervised stage");
        if (source.config.channels.size() != cfg.channels.size())
            throw DataError("transfer: channel count mismatch with source");
        for (std::size_t ch = 0; ch < cfg.channels.size(); ++ch)
            if (source.config.channels[ch].raw_dim != cfg.channels[ch].raw_dim)
                throw DataError("transfer: channel dim mismatch with source");
        out.config = cfg;
        out.channel_pca = source.channel_pca;
        out.channel_gmm = source.channel_gmm;
    } else {
        out = fit_unsupervised(target_train, cfg);
    }

    const auto reps = encode(out, target_train, /*dafs=*/true, cfg.threads);
    const auto labels = rep_labels(reps);
    const int classes = infer_num_classes(cfg, labels);

    TrainOptions opts;
    if (what.count("reduction")) {
        if (!source.rep_reduction)
            throw DataError("transfer: source has no representation reduction");
        opts.fixed_reduction = source.rep_reduction;
    }
    if (what.count("supervised")) {
        if (source.nets.empty()) throw DataError("transfer: source has no supervised layers");
        const auto tr = net::replace_output_layer(source.nets.front(), classes, cfg.seed);
        opts.initial_net = tr.model;
        opts.alpha_override = cfg.adam.alpha / 10.0;
    }
    train_classifier(out, reps, cfg, opts);
    return out;
}

Matrix predict_scores(const ModelContainer& c, const std::vector<fv::VideoRepresentation>& reps) {
    const Matrix X = rep_matrix(reps);
    if (c.classifier == ClassifierKind::svm) return classify::svm_scores(*c.svm, X);
    if (c.classifier != ClassifierKind::mlp || c.nets.empty())
        throw DataError("predict: container has no classifier");
    Matrix inputs = X;
    if (c.rep_reduction) {
        const auto layer = reduction::reduction_layer_weights(*c.rep_reduction);
        inputs = reduction::apply_reduction_layer(layer, X);
    }
    Matrix scores = net::predict(c.nets.front(), inputs);
    for (std::size_t i = 1; i < c.nets.size(); ++i) scores += net::predict(c.nets[i], inputs);
    return scores / static_cast<double>(c.nets.size());
}

classify::EvalReport evaluate(const ModelContainer& c,
                              const std::vector<fv::VideoRepresentation>& reps,
                              classify::Protocol protocol, int negative_class) {
    const Matrix scores = predict_scores(c, reps);
    const int classes = static_cast<int>(scores.cols());
    return classify::evaluate(scores, rep_labels(reps), classes, protocol, {}, negative_class);
}

std::string sweep(const PipelineConfig& cfg, const std::vector<fv::VideoRepresentation>& reps) {
    const auto labels = rep_labels(reps);
    const Eigen::Index n = static_cast<Eigen::Index>(reps.size());
    if (n < 5) throw DataError("sweep: too few representations");

    // deterministic 80/20 split
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const Eigen::Index n_val = std::max<Eigen::Index>(1, n / 5);
    std::vector<fv::VideoRepresentation> train_reps, val_reps;
    for (Eigen::Index i = 0; i < n; ++i)
        (i < n_val ? val_reps : train_reps).push_back(reps[order[i]]);

    std::ostringstream csv;
    csv << "batch,width,depth,dropout,train_acc,val_acc,final_loss\n";
    for (int batch : cfg.sweep_batches)
        for (int width : cfg.sweep_widths)
            for (int depth : cfg.sweep_depths)
                for (double dropout : cfg.sweep_dropouts) {
                    PipelineConfig tuple = cfg;
                    tuple.batch_size = batch;
                    tuple.width = width;
                    tuple.depth = depth;
                    tuple.dropout_p = dropout;
                    tuple.classifier = ClassifierKind::mlp;
                    ModelContainer c;
                    c.config = tuple;
                    train_classifier(c, train_reps, tuple);
                    const auto train_rep = evaluate(c, train_reps, classify::Protocol::mAcc);
                    const auto val_rep = evaluate(c, val_reps, classify::Protocol::mAcc);
                    const Matrix scores = predict_scores(c, train_reps);
                    const Matrix targets = targets_matrix(
                        rep_labels(train_reps), static_cast<int>(scores.cols()), tuple.task);
                    csv << batch << "," << width << "," << depth << "," << dropout << ","
                        << train_rep.mean_acc << "," << val_rep.mean_acc << ","
                        << net::loss_mean(scores, targets, tuple.task) << "\n";
                }
    return csv.str();
}

void write_pr_curves(const Matrix& scores, const std::vector<std::set<int>>& labels,
                     int num_classes, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const Eigen::Index n = scores.rows();
    for (int c = 0; c < num_classes; ++c) {
        std::vector<Eigen::Index> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return scores(a, c) > scores(b, c);
        });
        Eigen::Index positives = 0;
        for (const auto& ls : labels) positives += ls.count(c);
        if (positives == 0) continue;
        std::vector<std::pair<double, double>> pts;  // (recall, precision)
        Eigen::Index hits = 0;
        for (Eigen::Index rank = 0; rank < n; ++rank) {
            hits += labels[order[rank]].count(c);
            pts.emplace_back(double(hits) / double(positives), double(hits) / double(rank + 1));
        }
        const int W = 480, H = 480, M = 40;
        std::ofstream svg(dir + "/pr_class_" + std::to_string(c) + ".svg");
        svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
            << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
            << "<text x='" << W / 2 << "' y='20' text-anchor='middle'>class " << c
            << " precision-recall</text>\n<polyline fill='none' stroke='steelblue' points='";
        for (const auto& [r, p] : pts)
            svg << M + r * (W - 2 * M) << "," << H - M - p * (H - 2 * M) << " ";
        svg << "'/>\n<line x1='" << M << "' y1='" << H - M << "' x2='" << W - M << "' y2='"
            << H - M << "' stroke='black'/>\n<line x1='" << M << "' y1='" << M << "' x2='" << M
            << "' y2='" << H - M << "' stroke='black'/>\n</svg>\n";
    }
}

}  // namespace fvstack::pipeline
