#include <fstream>
#include <sstream>

#include "fvstack/pipeline.hpp"

namespace fvstack::pipeline {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

class KvReader {
public:
    explicit KvReader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

    std::string str(const std::string& key, const std::string& dflt) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : it->second;
    }
    long i(const std::string& key, long dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stol(it->second);
        } catch (...) {
            throw ConfigError("config: bad integer for " + key + ": " + it->second);
        }
    }
    double d(const std::string& key, double dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw ConfigError("config: bad number for " + key + ": " + it->second);
        }
    }
    bool b(const std::string& key, bool dflt) const {
        const std::string v = str(key, dflt ? "true" : "false");
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config: bad boolean for " + key + ": " + v);
    }

private:
    const std::map<std::string, std::string>& kv_;
};

}  // namespace

PipelineConfig PipelineConfig::defaults() { return from_map({}); }

PipelineConfig PipelineConfig::from_map(const std::map<std::string, std::string>& kv) {
    KvReader r(kv);
    PipelineConfig c;
    c.raw = kv;

    const std::map<std::string, int> stock_dims = {
        {"Traj", 30}, {"HOG", 96}, {"HOF", 108}, {"MBHx", 96}, {"MBHy", 96}};
    for (const auto& name : split(r.str("channels.list", "Traj,HOG,HOF,MBHx,MBHy"), ',')) {
        if (name.empty()) continue;
        desc::ChannelSpec spec;
        spec.name = name;
        const auto stock = stock_dims.find(name);
        const int dflt = stock == stock_dims.end() ? 6 : stock->second;
        spec.raw_dim = static_cast<int>(r.i("channels." + name + ".dim", dflt));
        if (spec.raw_dim <= 0) throw ConfigError("config: channel " + name + " dim must be > 0");
        c.channels.push_back(spec);
    }
    if (c.channels.empty()) throw ConfigError("config: no channels declared");

    for (const auto& v : split(r.str("dafs.variants", "1:0,2:0,3:0,1:1,2:1,3:1"), ',')) {
        const auto parts = split(v, ':');
        if (parts.size() != 2) throw ConfigError("config: bad dafs variant " + v);
        desc::TransformTag tag;
        tag.skip_level = std::stoi(parts[0]);
        tag.mirrored = parts[1] != "0";
        if (tag.skip_level < 1) throw ConfigError("config: dafs skip_level must be >= 1");
        c.dafs_variants.push_back(tag);
    }
    c.mirror_channel = static_cast<int>(r.i("dafs.mirror_channel", 0));
    c.mirror_flip_dims = static_cast<int>(r.i("dafs.mirror_flip_dims", 0));

    c.gmm.K = static_cast<int>(r.i("gmm.k", 256));
    c.gmm.em_iters = static_cast<int>(r.i("gmm.em_iters", 10));
    c.gmm.sample_size = static_cast<int>(r.i("gmm.sample_size", 256000));
    c.gmm.variance_floor = r.d("gmm.variance_floor", 1e-4);
    if (c.gmm.K < 1 || c.gmm.em_iters < 1 || c.gmm.sample_size < c.gmm.K)
        throw ConfigError("config: invalid gmm section");

    c.pca_factor = static_cast<int>(r.i("pca.factor", 2));
    if (c.pca_factor < 1) throw ConfigError("config: pca.factor must be >= 1");

    const std::string mode = r.str("reduction.mode", "unsupervised_pca");
    if (mode == "none")
        c.reduction_mode = ReductionMode::none;
    else if (mode == "unsupervised_pca")
        c.reduction_mode = ReductionMode::unsupervised_pca;
    else if (mode == "supervised_midtoend")
        c.reduction_mode = ReductionMode::supervised_midtoend;
    else
        throw ConfigError("config: unknown reduction.mode " + mode);
    c.reduction_r = static_cast<int>(r.i("reduction.r", -1));
    c.reduction_fraction = r.d("reduction.fraction", 0.99);

    const std::string cls = r.str("net.classifier", "mlp");
    if (cls == "mlp")
        c.classifier = ClassifierKind::mlp;
    else if (cls == "svm")
        c.classifier = ClassifierKind::svm;
    else
        throw ConfigError("config: unknown net.classifier " + cls);
    c.depth = static_cast<int>(r.i("net.depth", 2));
    c.width = static_cast<int>(r.i("net.width", 4096));
    c.dropout_p = r.d("net.dropout", 0.5);
    c.batch_size = static_cast<int>(r.i("net.batch_size", 128));
    c.epochs = static_cast<int>(r.i("net.epochs", 50));
    if (c.depth < 1 || c.width < 1 || c.batch_size < 1 || c.epochs < 1)
        throw ConfigError("config: invalid net section");
    const std::string task = r.str("net.task", "multiclass");
    if (task == "multiclass")
        c.task = net::Task::multiclass;
    else if (task == "multilabel")
        c.task = net::Task::multilabel;
    else
        throw ConfigError("config: unknown net.task " + task);
    c.num_classes = static_cast<int>(r.i("net.classes", 0));
    c.adam.alpha = r.d("net.adam_alpha", 1e-3);
    c.adam.beta1 = r.d("net.adam_beta1", 0.9);
    c.adam.beta2 = r.d("net.adam_beta2", 0.999);
    c.adam.eps = r.d("net.adam_eps", 1e-8);
    c.adam.paper_form = r.b("net.adam_paper_form", true);
    c.svm_c = r.d("net.svm_c", 100.0);

    c.bag_count = static_cast<int>(r.i("bagging.count", 8));
    if (c.bag_count < 1) throw ConfigError("config: bagging.count must be >= 1");

    const std::string proto = r.str("eval.protocol", "macc");
    if (proto == "macc")
        c.protocol = classify::Protocol::mAcc;
    else if (proto == "map")
        c.protocol = classify::Protocol::mAP;
    else if (proto == "map+")
        c.protocol = classify::Protocol::mAP_positives_only;
    else
        throw ConfigError("config: unknown eval.protocol " + proto);
    c.negative_class = static_cast<int>(r.i("eval.negative_class", -1));

    c.synth.channels = c.channels;
    c.synth.classes = static_cast<int>(r.i("synth.classes", 5));
    c.synth.videos_per_class = static_cast<int>(r.i("synth.videos_per_class", 50));
    c.synth.records_per_video = static_cast<int>(r.i("synth.records_per_video", 200));
    c.synth.separation = r.d("synth.separation", 3.0);
    c.synth.noise = r.d("synth.noise", 1.0);
    const std::string smode = r.str("synth.mode", "separable");
    if (smode == "separable")
        c.synth.mode = desc::SynthSpec::Mode::separable;
    else if (smode == "xor")
        c.synth.mode = desc::SynthSpec::Mode::xor_clusters;
    else
        throw ConfigError("config: unknown synth.mode " + smode);
    c.synth.multilabel = r.b("synth.multilabel", false);

    auto ints = [&](const std::string& key, std::vector<int> dflt) {
        auto it = c.raw.find(key);
        if (it == c.raw.end()) return dflt;
        std::vector<int> out;
        for (const auto& s : split(it->second, ',')) out.push_back(std::stoi(s));
        if (out.empty()) throw ConfigError("config: empty list for " + key);
        return out;
    };
    auto doubles = [&](const std::string& key, std::vector<double> dflt) {
        auto it = c.raw.find(key);
        if (it == c.raw.end()) return dflt;
        std::vector<double> out;
        for (const auto& s : split(it->second, ',')) out.push_back(std::stod(s));
        if (out.empty()) throw ConfigError("config: empty list for " + key);
        return out;
    };
    c.sweep_batches = ints("sweep.batches", c.sweep_batches);
    c.sweep_widths = ints("sweep.widths", c.sweep_widths);
    c.sweep_depths = ints("sweep.depths", c.sweep_depths);
    c.sweep_dropouts = doubles("sweep.dropouts", c.sweep_dropouts);

    c.seed = static_cast<std::uint64_t>(r.i("seed", 42));
    c.gmm.seed = c.seed;
    c.threads = static_cast<int>(r.i("threads", 1));
    c.deterministic = r.b("deterministic", true);
    if (c.threads < 1) throw ConfigError("config: threads must be >= 1");

    static const std::set<std::string> known = {
        "channels.list", "dafs.variants", "dafs.mirror_channel", "dafs.mirror_flip_dims",
        "gmm.k", "gmm.em_iters", "gmm.sample_size", "gmm.variance_floor", "pca.factor",
        "reduction.mode", "reduction.r", "reduction.fraction", "net.classifier",
        "net.depth", "net.width", "net.dropout", "net.batch_size", "net.epochs",
        "net.task", "net.classes", "net.adam_alpha", "net.adam_beta1", "net.adam_beta2",
        "net.adam_eps", "net.adam_paper_form", "net.svm_c", "bagging.count",
        "eval.protocol", "eval.negative_class", "synth.classes", "synth.videos_per_class",
        "synth.records_per_video", "synth.separation", "synth.noise", "synth.mode",
        "synth.multilabel", "sweep.batches", "sweep.widths", "sweep.depths",
        "sweep.dropouts", "seed", "threads", "deterministic"};
    for (const auto& [key, value] : kv) {
        if (known.count(key)) continue;
        bool channel_dim = false;
        for (const auto& ch : c.channels)
            if (key == "channels." + ch.name + ".dim") channel_dim = true;
        if (!channel_dim) throw ConfigError("config: unknown key " + key);
    }
    return c;
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        kv[key] = trim(line.substr(eq + 1));
    }
    return from_map(kv);
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
    auto kv = raw;
    kv[key] = value;
    *this = from_map(kv);
}

std::string PipelineConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    auto kv = [&](const std::string& k, const auto& v) { os << k << " = " << v << "\n"; };

    std::string list;
    for (const auto& ch : channels) list += (list.empty() ? "" : ",") + ch.name;
    kv("channels.list", list);
    for (const auto& ch : channels) kv("channels." + ch.name + ".dim", ch.raw_dim);

    std::string variants;
    for (const auto& t : dafs_variants)
        variants += (variants.empty() ? "" : ",") + std::to_string(t.skip_level) + ":" +
                    (t.mirrored ? "1" : "0");
    kv("dafs.variants", variants);
    kv("dafs.mirror_channel", mirror_channel);
    kv("dafs.mirror_flip_dims", mirror_flip_dims);

    kv("gmm.k", gmm.K);
    kv("gmm.em_iters", gmm.em_iters);
    kv("gmm.sample_size", gmm.sample_size);
    kv("gmm.variance_floor", gmm.variance_floor);
    kv("pca.factor", pca_factor);

    kv("reduction.mode", reduction_mode == ReductionMode::none ? "none"
                         : reduction_mode == ReductionMode::unsupervised_pca
                             ? "unsupervised_pca"
                             : "supervised_midtoend");
    kv("reduction.r", reduction_r);
    kv("reduction.fraction", reduction_fraction);

    kv("net.classifier", classifier == ClassifierKind::svm ? "svm" : "mlp");
    kv("net.depth", depth);
    kv("net.width", width);
    kv("net.dropout", dropout_p);
    kv("net.batch_size", batch_size);
    kv("net.epochs", epochs);
    kv("net.task", task == net::Task::multilabel ? "multilabel" : "multiclass");
    kv("net.classes", num_classes);
    kv("net.adam_alpha", adam.alpha);
    kv("net.adam_beta1", adam.beta1);
    kv("net.adam_beta2", adam.beta2);
    kv("net.adam_eps", adam.eps);
    kv("net.adam_paper_form", adam.paper_form ? "true" : "false");
    kv("net.svm_c", svm_c);

    kv("bagging.count", bag_count);
    kv("eval.protocol", protocol == classify::Protocol::mAcc ? "macc"
                        : protocol == classify::Protocol::mAP ? "map"
                                                              : "map+");
    kv("eval.negative_class", negative_class);

    kv("synth.classes", synth.classes);
    kv("synth.videos_per_class", synth.videos_per_class);
    kv("synth.records_per_video", synth.records_per_video);
    kv("synth.separation", synth.separation);
    kv("synth.noise", synth.noise);
    kv("synth.mode", synth.mode == desc::SynthSpec::Mode::xor_clusters ? "xor" : "separable");
    kv("synth.multilabel", synth.multilabel ? "true" : "false");

    auto join_i = [](const std::vector<int>& v) {
        std::string s;
        for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
        return s;
    };
    std::string drops;
    {
        std::ostringstream ds;
        ds.precision(17);
        for (std::size_t i = 0; i < sweep_dropouts.size(); ++i)
            ds << (i ? "," : "") << sweep_dropouts[i];
        drops = ds.str();
    }
    kv("sweep.batches", join_i(sweep_batches));
    kv("sweep.widths", join_i(sweep_widths));
    kv("sweep.depths", join_i(sweep_depths));
    kv("sweep.dropouts", drops);

    kv("seed", seed);
    kv("threads", threads);
    kv("deterministic", deterministic ? "true" : "false");
    return os.str();
}

std::vector<std::string> PipelineConfig::channel_names() const {
    std::vector<std::string> names;
    for (const auto& ch : channels) names.push_back(ch.name);
    return names;
}

}  // namespace fvstack::pipeline
