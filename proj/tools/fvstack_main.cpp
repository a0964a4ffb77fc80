// fvstack command line: drives the shared library through its C interface.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fvstack/fvstack.h"

namespace fs = std::filesystem;

namespace {

struct ConfigHandle {
    fvs_config* ptr = nullptr;
    ~ConfigHandle() { fvs_config_free(ptr); }
};
struct ContainerHandle {
    fvs_container* ptr = nullptr;
    ~ContainerHandle() { fvs_container_free(ptr); }
};

[[noreturn]] void die(fvs_status status) {
    std::fprintf(stderr, "fvstack: %s\n", fvs_last_error());
    std::exit(static_cast<int>(status));
}

void check(fvs_status status) {
    if (status != FVS_OK) die(status);
}

// Directory arguments expand to their files with the given extension, sorted.
std::vector<std::string> expand(const std::vector<std::string>& args, const char* ext) {
    std::vector<std::string> out;
    for (const auto& a : args) {
        if (fs::is_directory(a)) {
            std::vector<std::string> found;
            for (const auto& e : fs::directory_iterator(a))
                if (e.path().extension() == ext) found.push_back(e.path().string());
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(a);
        }
    }
    if (out.empty()) {
        std::fprintf(stderr, "fvstack: no input files\n");
        std::exit(static_cast<int>(FVS_ERR_DATA));
    }
    return out;
}

std::vector<const char*> c_paths(const std::vector<std::string>& paths) {
    std::vector<const char*> out;
    for (const auto& p : paths) out.push_back(p.c_str());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fisher-Vector pipeline with a hybrid neural classifier"};
    app.require_subcommand(1);

    std::string config_path;
    long long seed = -1;
    int threads = 0;
    bool deterministic = false;
    app.add_option("--config", config_path, "configuration file");
    app.add_option("--seed", seed, "override the configured random seed");
    app.add_option("--threads", threads, "worker threads for encoding and bagging");
    app.add_flag("--deterministic", deterministic, "single-threaded bit-stable mode");

    std::vector<std::string> inputs;
    std::string out_path, model_path, source_path, stages = "gmm", protocol = "macc";
    std::string plot_dir;
    int count = 8, negative_class = -1;
    bool dafs = true, csv = false;

    auto* synth = app.add_subcommand("synth", "generate synthetic descriptor files");
    synth->add_option("--out", out_path, "output directory")->required();

    auto* fit = app.add_subcommand("fit-unsup", "fit per-channel PCA and GMM codebooks");
    fit->add_option("inputs", inputs, "descriptor files or directories")->required();
    fit->add_option("--out", out_path, "model container output path")->required();

    auto* enc = app.add_subcommand("encode", "encode descriptors to FVR1 caches");
    enc->add_option("inputs", inputs, "descriptor files or directories")->required();
    enc->add_option("--model", model_path, "model container")->required();
    enc->add_option("--out", out_path, "output directory")->required();
    enc->add_flag("--dafs,!--no-dafs", dafs, "stack the configured transform variants");

    auto* train = app.add_subcommand("train", "train the classifier on cached representations");
    train->add_option("inputs", inputs, "FVR1 files or directories")->required();
    train->add_option("--model", model_path, "model container")->required();
    train->add_option("--out", out_path, "output container (defaults to --model)");

    auto* bag_cmd = app.add_subcommand("bag", "train a bagged ensemble");
    bag_cmd->add_option("inputs", inputs, "FVR1 files or directories")->required();
    bag_cmd->add_option("--model", model_path, "model container")->required();
    bag_cmd->add_option("--out", out_path, "output container (defaults to --model)");
    bag_cmd->add_option("--count", count, "ensemble size");

    auto* transfer = app.add_subcommand("transfer", "refit on a target dataset reusing stages");
    transfer->add_option("inputs", inputs, "target descriptor files or directories")->required();
    transfer->add_option("--source", source_path, "source model container")->required();
    transfer->add_option("--out", out_path, "target container output path")->required();
    transfer->add_option("--stages", stages,
                         "comma list from {gmm,reduction,supervised}; empty = refit all");

    auto* eval = app.add_subcommand("eval", "evaluate a trained container");
    eval->add_option("inputs", inputs, "FVR1 files or directories")->required();
    eval->add_option("--model", model_path, "model container")->required();
    eval->add_option("--protocol", protocol, "macc | map | map+");
    eval->add_option("--negative-class", negative_class, "class excluded by map+");
    eval->add_option("--plot", plot_dir, "directory for per-class precision-recall SVGs");
    eval->add_flag("--csv", csv, "print the machine-readable report");

    auto* sweep = app.add_subcommand("sweep", "architecture sweep, one CSV row per tuple");
    sweep->add_option("inputs", inputs, "FVR1 files or directories")->required();
    sweep->add_option("--out", out_path, "CSV output file (stdout when omitted)");

    CLI11_PARSE(app, argc, argv);

    ConfigHandle cfg;
    check(config_path.empty() ? fvs_config_default(&cfg.ptr)
                              : fvs_config_load(config_path.c_str(), &cfg.ptr));
    if (seed >= 0) check(fvs_config_set(cfg.ptr, "seed", std::to_string(seed).c_str()));
    if (threads > 0) check(fvs_config_set(cfg.ptr, "threads", std::to_string(threads).c_str()));
    if (deterministic) {
        check(fvs_config_set(cfg.ptr, "deterministic", "true"));
        check(fvs_config_set(cfg.ptr, "threads", "1"));
    }

    if (synth->parsed()) {
        size_t written = 0;
        check(fvs_synth(cfg.ptr, out_path.c_str(), seed >= 0 ? seed : 42, &written));
        std::printf("wrote %zu descriptor files to %s\n", written, out_path.c_str());
        return 0;
    }

    if (fit->parsed()) {
        const auto paths = expand(inputs, ".fvd");
        const auto cp = c_paths(paths);
        ContainerHandle c;
        check(fvs_fit_unsupervised(cfg.ptr, cp.data(), cp.size(), &c.ptr));
        check(fvs_container_save(c.ptr, out_path.c_str()));
        std::printf("fitted unsupervised stage on %zu videos -> %s\n", cp.size(),
                    out_path.c_str());
        return 0;
    }

    if (enc->parsed()) {
        const auto paths = expand(inputs, ".fvd");
        const auto cp = c_paths(paths);
        ContainerHandle c;
        check(fvs_container_load(model_path.c_str(), &c.ptr));
        check(fvs_encode(c.ptr, cp.data(), cp.size(), out_path.c_str(), dafs ? 1 : 0));
        std::printf("encoded %zu videos -> %s\n", cp.size(), out_path.c_str());
        return 0;
    }

    if (train->parsed() || bag_cmd->parsed()) {
        const auto paths = expand(inputs, ".fvr");
        const auto cp = c_paths(paths);
        ContainerHandle c;
        check(fvs_container_load(model_path.c_str(), &c.ptr));
        if (train->parsed())
            check(fvs_train(c.ptr, cfg.ptr, cp.data(), cp.size()));
        else
            check(fvs_bag(c.ptr, cfg.ptr, cp.data(), cp.size(), count));
        const std::string dest = out_path.empty() ? model_path : out_path;
        check(fvs_container_save(c.ptr, dest.c_str()));
        std::printf("trained on %zu videos -> %s\n", cp.size(), dest.c_str());
        return 0;
    }

    if (transfer->parsed()) {
        const auto paths = expand(inputs, ".fvd");
        const auto cp = c_paths(paths);
        ContainerHandle src, dst;
        check(fvs_container_load(source_path.c_str(), &src.ptr));
        unsigned mask = 0;
        std::string token;
        for (char ch : stages + ",") {
            if (ch == ',') {
                if (token == "gmm") mask |= FVS_TRANSFER_GMM;
                else if (token == "reduction") mask |= FVS_TRANSFER_REDUCTION;
                else if (token == "supervised") mask |= FVS_TRANSFER_SUPERVISED;
                else if (!token.empty()) {
                    std::fprintf(stderr, "fvstack: unknown stage '%s'\n", token.c_str());
                    return static_cast<int>(FVS_ERR_CONFIG);
                }
                token.clear();
            } else {
                token += ch;
            }
        }
        check(fvs_transfer(src.ptr, cfg.ptr, cp.data(), cp.size(), mask, &dst.ptr));
        check(fvs_container_save(dst.ptr, out_path.c_str()));
        std::printf("transferred [%s] onto %zu videos -> %s\n", stages.c_str(), cp.size(),
                    out_path.c_str());
        return 0;
    }

    if (eval->parsed()) {
        const auto paths = expand(inputs, ".fvr");
        const auto cp = c_paths(paths);
        ContainerHandle c;
        check(fvs_container_load(model_path.c_str(), &c.ptr));
        fvs_protocol proto = FVS_PROTO_MACC;
        if (protocol == "map") proto = FVS_PROTO_MAP;
        else if (protocol == "map+") proto = FVS_PROTO_MAP_POSITIVES;
        else if (protocol != "macc") {
            std::fprintf(stderr, "fvstack: unknown protocol '%s'\n", protocol.c_str());
            return static_cast<int>(FVS_ERR_CONFIG);
        }
        char* text = nullptr;
        char* csv_text = nullptr;
        check(fvs_eval(c.ptr, cp.data(), cp.size(), proto, negative_class,
                       plot_dir.empty() ? nullptr : plot_dir.c_str(), &text, &csv_text));
        std::fputs(csv ? csv_text : text, stdout);
        fvs_string_free(text);
        fvs_string_free(csv_text);
        return 0;
    }

    if (sweep->parsed()) {
        const auto paths = expand(inputs, ".fvr");
        const auto cp = c_paths(paths);
        char* csv_text = nullptr;
        check(fvs_sweep(cfg.ptr, cp.data(), cp.size(), &csv_text));
        if (out_path.empty()) {
            std::fputs(csv_text, stdout);
        } else {
            FILE* f = std::fopen(out_path.c_str(), "w");
            if (!f) {
                std::fprintf(stderr, "fvstack: cannot write %s\n", out_path.c_str());
                return static_cast<int>(FVS_ERR_DATA);
            }
            std::fputs(csv_text, f);
            std::fclose(f);
        }
        fvs_string_free(csv_text);
        return 0;
    }

    return 0;
}
