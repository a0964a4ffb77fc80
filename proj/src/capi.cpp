#include "fvstack/fvstack.h"

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fvstack/pipeline.hpp"

using namespace fvstack;

struct fvs_config_s {
    pipeline::PipelineConfig cfg;
};
struct fvs_container_s {
    pipeline::ModelContainer c;
};

namespace {

thread_local std::string g_last_error;

fvs_status fail(fvs_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
fvs_status guarded(Fn&& fn) {
    try {
        fn();
        return FVS_OK;
    } catch (const ConfigError& e) {
        return fail(FVS_ERR_CONFIG, e.what());
    } catch (const DataError& e) {
        return fail(FVS_ERR_DATA, e.what());
    } catch (const NumericError& e) {
        return fail(FVS_ERR_NUMERIC, e.what());
    } catch (const std::exception& e) {
        return fail(FVS_ERR_NUMERIC, e.what());
    }
}

std::vector<std::string> to_paths(const char* const* paths, size_t n) {
    std::vector<std::string> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.emplace_back(paths[i]);
    return out;
}

std::vector<desc::DescriptorSet> load_descriptors(const char* const* paths, size_t n) {
    std::vector<desc::DescriptorSet> sets;
    for (const auto& p : to_paths(paths, n)) sets.push_back(desc::read_descriptors(p));
    return sets;
}

std::vector<fv::VideoRepresentation> load_reps(const char* const* paths, size_t n) {
    std::vector<fv::VideoRepresentation> reps;
    for (const auto& p : to_paths(paths, n)) reps.push_back(fv::read_representation(p));
    return reps;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

extern "C" {

const char* fvs_last_error(void) { return g_last_error.c_str(); }

void fvs_string_free(char* s) { std::free(s); }

fvs_status fvs_config_default(fvs_config** out) {
    return guarded([&] { *out = new fvs_config_s{pipeline::PipelineConfig::defaults()}; });
}

fvs_status fvs_config_load(const char* path, fvs_config** out) {
    return guarded([&] { *out = new fvs_config_s{pipeline::PipelineConfig::load(path)}; });
}

fvs_status fvs_config_set(fvs_config* cfg, const char* key, const char* value) {
    return guarded([&] { cfg->cfg.set(key, value); });
}

void fvs_config_free(fvs_config* cfg) { delete cfg; }

fvs_status fvs_synth(const fvs_config* cfg, const char* out_dir, uint64_t seed,
                     size_t* files_written) {
    return guarded([&] {
        const auto sets = desc::synth_generate(cfg->cfg.synth, seed);
        std::filesystem::create_directories(out_dir);
        for (const auto& set : sets)
            desc::write_descriptors(set, std::string(out_dir) + "/" + set.video_id + ".fvd");
        if (files_written) *files_written = sets.size();
    });
}

fvs_status fvs_fit_unsupervised(const fvs_config* cfg, const char* const* descriptor_paths,
                                size_t n, fvs_container** out) {
    return guarded([&] {
        auto sets = load_descriptors(descriptor_paths, n);
        *out = new fvs_container_s{pipeline::fit_unsupervised(sets, cfg->cfg)};
    });
}

fvs_status fvs_container_load(const char* path, fvs_container** out) {
    return guarded([&] { *out = new fvs_container_s{pipeline::load_container(path)}; });
}

fvs_status fvs_container_save(const fvs_container* c, const char* path) {
    return guarded([&] { pipeline::save_container(c->c, path); });
}

void fvs_container_free(fvs_container* c) { delete c; }

fvs_status fvs_encode(const fvs_container* c, const char* const* descriptor_paths, size_t n,
                      const char* out_dir, int use_dafs) {
    return guarded([&] {
        auto sets = load_descriptors(descriptor_paths, n);
        const auto reps =
            pipeline::encode(c->c, sets, use_dafs != 0, c->c.config.threads);
        std::filesystem::create_directories(out_dir);
        for (size_t i = 0; i < reps.size(); ++i) {
            const std::string stem =
                std::filesystem::path(descriptor_paths[i]).stem().string();
            fv::write_representation(reps[i], std::string(out_dir) + "/" + stem + ".fvr");
        }
    });
}

fvs_status fvs_train(fvs_container* c, const fvs_config* cfg, const char* const* rep_paths,
                     size_t n) {
    return guarded([&] {
        const auto reps = load_reps(rep_paths, n);
        pipeline::train_classifier(c->c, reps, cfg->cfg);
    });
}

fvs_status fvs_bag(fvs_container* c, const fvs_config* cfg, const char* const* rep_paths,
                   size_t n, int count) {
    return guarded([&] {
        const auto reps = load_reps(rep_paths, n);
        pipeline::bag(c->c, reps, cfg->cfg, count);
    });
}

fvs_status fvs_transfer(const fvs_container* source, const fvs_config* cfg,
                        const char* const* target_descriptor_paths, size_t n,
                        unsigned stage_mask, fvs_container** out) {
    return guarded([&] {
        auto sets = load_descriptors(target_descriptor_paths, n);
        std::set<std::string> what;
        if (stage_mask & FVS_TRANSFER_GMM) what.insert("gmm");
        if (stage_mask & FVS_TRANSFER_REDUCTION) what.insert("reduction");
        if (stage_mask & FVS_TRANSFER_SUPERVISED) what.insert("supervised");
        *out = new fvs_container_s{pipeline::transfer(source->c, sets, cfg->cfg, what)};
    });
}

fvs_status fvs_eval(const fvs_container* c, const char* const* rep_paths, size_t n,
                    fvs_protocol protocol, int negative_class, const char* plot_dir,
                    char** text_out, char** csv_out) {
    return guarded([&] {
        const auto reps = load_reps(rep_paths, n);
        classify::Protocol proto = protocol == FVS_PROTO_MACC ? classify::Protocol::mAcc
                                   : protocol == FVS_PROTO_MAP
                                       ? classify::Protocol::mAP
                                       : classify::Protocol::mAP_positives_only;
        const auto report = pipeline::evaluate(c->c, reps, proto, negative_class);
        if (plot_dir) {
            const Matrix scores = pipeline::predict_scores(c->c, reps);
            pipeline::write_pr_curves(scores, pipeline::rep_labels(reps),
                                      static_cast<int>(scores.cols()), plot_dir);
        }
        if (text_out) *text_out = dup_string(report.to_text());
        if (csv_out) *csv_out = dup_string(report.to_csv());
    });
}

fvs_status fvs_sweep(const fvs_config* cfg, const char* const* rep_paths, size_t n,
                     char** csv_out) {
    return guarded([&] {
        const auto reps = load_reps(rep_paths, n);
        const std::string csv = pipeline::sweep(cfg->cfg, reps);
        if (csv_out) *csv_out = dup_string(csv);
    });
}

}  // extern "C"
