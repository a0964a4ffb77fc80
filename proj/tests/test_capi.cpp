#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "fvstack/fvstack.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> list_files(const fs::path& dir, const std::string& ext) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ext) out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<const char*> c_paths(const std::vector<std::string>& v) {
    std::vector<const char*> out;
    for (const auto& s : v) out.push_back(s.c_str());
    return out;
}

fvs_config* small_config() {
    fvs_config* cfg = nullptr;
    REQUIRE(fvs_config_default(&cfg) == FVS_OK);
    auto set = [&](const char* k, const char* v) {
        REQUIRE(fvs_config_set(cfg, k, v) == FVS_OK);
    };
    set("channels.list", "a,b");
    set("channels.a.dim", "8");
    set("channels.b.dim", "6");
    set("gmm.k", "4");
    set("gmm.em_iters", "3");
    set("reduction.mode", "none");
    set("net.depth", "1");
    set("net.width", "16");
    set("net.dropout", "0");
    set("net.batch_size", "8");
    set("net.epochs", "15");
    set("synth.classes", "2");
    set("synth.videos_per_class", "12");
    set("synth.records_per_video", "30");
    set("seed", "3");
    return cfg;
}

}  // namespace

TEST_CASE("error codes and messages surface through the C layer") {
    fvs_config* cfg = nullptr;
    CHECK(fvs_config_load("/nonexistent/config.ini", &cfg) == FVS_ERR_CONFIG);
    CHECK(std::strlen(fvs_last_error()) > 0);

    REQUIRE(fvs_config_default(&cfg) == FVS_OK);
    CHECK(fvs_config_set(cfg, "gmm.k", "banana") == FVS_ERR_CONFIG);
    CHECK(fvs_config_set(cfg, "no.such.key", "1") == FVS_ERR_CONFIG);
    CHECK(fvs_config_set(cfg, "gmm.k", "8") == FVS_OK);
    fvs_config_free(cfg);

    fvs_container* c = nullptr;
    CHECK(fvs_container_load("/nonexistent/model.fvc", &c) == FVS_ERR_DATA);
}

TEST_CASE("full pipeline through the C API") {
    TempDir dir("fvstack_capi");
    fvs_config* cfg = small_config();

    size_t written = 0;
    REQUIRE(fvs_synth(cfg, dir.path.string().c_str(), 3, &written) == FVS_OK);
    CHECK(written == 24);
    auto fvds = list_files(dir.path, ".fvd");
    REQUIRE(fvds.size() == 24);
    auto fvd_ptrs = c_paths(fvds);

    fvs_container* c = nullptr;
    REQUIRE(fvs_fit_unsupervised(cfg, fvd_ptrs.data(), fvd_ptrs.size(), &c) == FVS_OK);

    const auto rep_dir = dir.path / "reps";
    fs::create_directories(rep_dir);
    REQUIRE(fvs_encode(c, fvd_ptrs.data(), fvd_ptrs.size(), rep_dir.string().c_str(), 1) ==
            FVS_OK);
    auto fvrs = list_files(rep_dir, ".fvr");
    REQUIRE(fvrs.size() == 24);
    auto fvr_ptrs = c_paths(fvrs);

    REQUIRE(fvs_train(c, cfg, fvr_ptrs.data(), fvr_ptrs.size()) == FVS_OK);

    // save / load round trip
    const auto model_path = (dir.path / "model.fvc").string();
    REQUIRE(fvs_container_save(c, model_path.c_str()) == FVS_OK);
    fvs_container* loaded = nullptr;
    REQUIRE(fvs_container_load(model_path.c_str(), &loaded) == FVS_OK);

    char* text = nullptr;
    char* csv = nullptr;
    REQUIRE(fvs_eval(loaded, fvr_ptrs.data(), fvr_ptrs.size(), FVS_PROTO_MACC, -1, nullptr,
                     &text, &csv) == FVS_OK);
    REQUIRE(text != nullptr);
    REQUIRE(csv != nullptr);
    CHECK(std::string(text).find("mAcc") != std::string::npos);
    CHECK(std::string(csv).find(',') != std::string::npos);
    fvs_string_free(text);
    fvs_string_free(csv);

    // plots
    const auto plot_dir = dir.path / "plots";
    fs::create_directories(plot_dir);
    REQUIRE(fvs_eval(loaded, fvr_ptrs.data(), fvr_ptrs.size(), FVS_PROTO_MAP, -1,
                     plot_dir.string().c_str(), nullptr, nullptr) == FVS_OK);
    CHECK(list_files(plot_dir, ".svg").size() == 2);

    // bagging
    REQUIRE(fvs_bag(c, cfg, fvr_ptrs.data(), fvr_ptrs.size(), 2) == FVS_OK);

    // transfer reusing the unsupervised stage
    fvs_container* moved = nullptr;
    REQUIRE(fvs_transfer(c, cfg, fvd_ptrs.data(), fvd_ptrs.size(),
                         FVS_TRANSFER_GMM | FVS_TRANSFER_SUPERVISED, &moved) == FVS_OK);
    REQUIRE(moved != nullptr);
    fvs_container_free(moved);

    // sweep
    fvs_config* sweep_cfg = small_config();
    REQUIRE(fvs_config_set(sweep_cfg, "sweep.batches", "8") == FVS_OK);
    REQUIRE(fvs_config_set(sweep_cfg, "sweep.widths", "8") == FVS_OK);
    REQUIRE(fvs_config_set(sweep_cfg, "sweep.depths", "1") == FVS_OK);
    REQUIRE(fvs_config_set(sweep_cfg, "sweep.dropouts", "0,0.5") == FVS_OK);
    REQUIRE(fvs_config_set(sweep_cfg, "net.epochs", "4") == FVS_OK);
    char* sweep_csv = nullptr;
    REQUIRE(fvs_sweep(sweep_cfg, fvr_ptrs.data(), fvr_ptrs.size(), &sweep_csv) == FVS_OK);
    REQUIRE(sweep_csv != nullptr);
    CHECK(std::string(sweep_csv).find("batch,width,depth,dropout") != std::string::npos);
    fvs_string_free(sweep_csv);
    fvs_config_free(sweep_cfg);

    fvs_container_free(loaded);
    fvs_container_free(c);
    fvs_config_free(cfg);
}

TEST_CASE("data errors map to FVS_ERR_DATA") {
    TempDir dir("fvstack_capi_err");
    fvs_config* cfg = small_config();
    const auto bogus = (dir.path / "bogus.fvd").string();
    {
        FILE* f = std::fopen(bogus.c_str(), "wb");
        std::fputs("not a descriptor file", f);
        std::fclose(f);
    }
    const char* paths[1] = {bogus.c_str()};
    fvs_container* c = nullptr;
    CHECK(fvs_fit_unsupervised(cfg, paths, 1, &c) == FVS_ERR_DATA);
    CHECK(std::strlen(fvs_last_error()) > 0);
    fvs_config_free(cfg);
}
