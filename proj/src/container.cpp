// FVC1 model container: magic, u32 version, then tagged sections, each
// {u8 name_len, name, u64 payload_bytes, payload}. Unknown sections are
// skipped on load. Matrices stored row-major f64 little-endian.

#include <cstring>
#include <sstream>

#include "binio.hpp"
#include "fvstack/pipeline.hpp"

namespace fvstack::pipeline {

namespace {

constexpr char kMagic[4] = {'F', 'V', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

struct BufWriter {
    std::string buf;
    void raw(const void* src, std::size_t n) {
        buf.append(static_cast<const char*>(src), n);
    }
    template <typename T>
    void put(T v) {
        raw(&v, sizeof(T));
    }
    void str(const std::string& s) {
        put<std::uint64_t>(s.size());
        raw(s.data(), s.size());
    }
    void vec(const Vector& v) {
        put<std::uint64_t>(static_cast<std::uint64_t>(v.size()));
        raw(v.data(), sizeof(double) * v.size());
    }
    void mat(const Matrix& m) {
        put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
        put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(m(r, c));
    }
};

struct BufReader {
    const char* p;
    const char* end;
    void raw(void* dst, std::size_t n) {
        if (static_cast<std::size_t>(end - p) < n)
            throw DataError("container: truncated section payload");
        std::memcpy(dst, p, n);
        p += n;
    }
    template <typename T>
    T get() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }
    std::string str() {
        const auto n = get<std::uint64_t>();
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    Vector vec() {
        const auto n = get<std::uint64_t>();
        Vector v(static_cast<Eigen::Index>(n));
        raw(v.data(), sizeof(double) * n);
        return v;
    }
    Matrix mat() {
        const auto r = get<std::uint64_t>();
        const auto c = get<std::uint64_t>();
        Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (std::uint64_t i = 0; i < r; ++i)
            for (std::uint64_t j = 0; j < c; ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = get<double>();
        return m;
    }
};

void write_reduction(BufWriter& w, const reduction::ReductionModel& m) {
    w.vec(m.mean);
    w.mat(m.basis);
    w.vec(m.eigvals);
    w.put<double>(m.n_train);
    w.put<std::uint8_t>(m.whiten ? 1 : 0);
}

reduction::ReductionModel read_reduction(BufReader& r) {
    reduction::ReductionModel m;
    m.mean = r.vec();
    m.basis = r.mat();
    m.eigvals = r.vec();
    m.n_train = r.get<double>();
    m.whiten = r.get<std::uint8_t>() != 0;
    return m;
}

void write_gmm(BufWriter& w, const gmm::GmmModel& m) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.K));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.dim));
    w.vec(m.weights);
    w.mat(m.means);
    w.mat(m.stds);
}

gmm::GmmModel read_gmm(BufReader& r) {
    gmm::GmmModel m;
    m.K = static_cast<int>(r.get<std::uint32_t>());
    m.dim = static_cast<int>(r.get<std::uint32_t>());
    m.weights = r.vec();
    m.means = r.mat();
    m.stds = r.mat();
    return m;
}

void write_mlp(BufWriter& w, const net::MlpModel& m) {
    w.put<std::uint8_t>(m.task == net::Task::multiclass ? 0 : 1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.spec.in_dim));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(l.spec.out_dim));
        w.put<std::uint8_t>(l.spec.has_bn ? 1 : 0);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(l.spec.nonlin));
        w.put<std::uint8_t>(l.spec.trainable ? 1 : 0);
        w.put<double>(l.spec.dropout_p);
        w.mat(l.weights);
        w.vec(l.bias);
        if (l.spec.has_bn) {
            w.vec(l.bn.gamma);
            w.vec(l.bn.beta);
            w.vec(l.bn.running_mean);
            w.vec(l.bn.running_var);
            w.put<double>(l.bn.eps);
            w.put<double>(l.bn.momentum);
        }
    }
}

net::MlpModel read_mlp(BufReader& r) {
    net::MlpModel m;
    m.task = r.get<std::uint8_t>() == 0 ? net::Task::multiclass : net::Task::multilabel;
    const auto nl = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nl; ++i) {
        net::Layer l;
        l.spec.in_dim = static_cast<int>(r.get<std::uint32_t>());
        l.spec.out_dim = static_cast<int>(r.get<std::uint32_t>());
        l.spec.has_bn = r.get<std::uint8_t>() != 0;
        l.spec.nonlin = static_cast<net::Nonlinearity>(r.get<std::uint8_t>());
        l.spec.trainable = r.get<std::uint8_t>() != 0;
        l.spec.dropout_p = r.get<double>();
        l.weights = r.mat();
        l.bias = r.vec();
        if (l.spec.has_bn) {
            l.bn.gamma = r.vec();
            l.bn.beta = r.vec();
            l.bn.running_mean = r.vec();
            l.bn.running_var = r.vec();
            l.bn.eps = r.get<double>();
            l.bn.momentum = r.get<double>();
        }
        m.layers.push_back(std::move(l));
    }
    return m;
}

void write_section(io::Writer& w, const std::string& name, const std::string& payload) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(name.size()));
    w.str(name);
    w.put<std::uint64_t>(payload.size());
    w.raw(payload.data(), payload.size());
}

}  // namespace

void ModelContainer::validate() const {
    if (channel_pca.size() != channel_gmm.size())
        throw DataError("container: pca/gmm channel count mismatch");
    if (has_unsupervised() && channel_pca.size() != config.channels.size())
        throw DataError("container: channel count does not match config");
    Eigen::Index rep_dim = 0;
    for (std::size_t c = 0; c < channel_gmm.size(); ++c) {
        if (channel_pca[c].input_dim() != config.channels[c].raw_dim)
            throw DataError("container: channel " + config.channels[c].name +
                            " PCA input dim mismatch");
        if (channel_gmm[c].dim != channel_pca[c].output_dim() + 3)
            throw DataError("container: channel " + config.channels[c].name +
                            " GMM dim does not chain from PCA+STA");
        rep_dim += 2LL * channel_gmm[c].K * channel_gmm[c].dim;
    }
    Eigen::Index head_in = rep_dim;
    if (rep_reduction) {
        if (has_unsupervised() && rep_reduction->input_dim() != rep_dim)
            throw DataError("container: representation reduction input dim mismatch");
        head_in = rep_reduction->output_dim();
    }
    if (classifier == ClassifierKind::mlp) {
        if (nets.empty()) throw DataError("container: mlp classifier without networks");
        for (const auto& m : nets) {
            m.validate();
            if (has_unsupervised() && m.input_dim() != head_in)
                throw DataError("container: network input dim does not chain");
        }
    }
    if (classifier == ClassifierKind::svm) {
        if (!svm) throw DataError("container: svm classifier without model");
        if (has_unsupervised() && svm->weights.cols() != head_in)
            throw DataError("container: svm input dim does not chain");
    }
}

void save_container(const ModelContainer& c, const std::string& path) {
    io::Writer w(path);
    w.raw(kMagic, 4);
    w.put<std::uint32_t>(kVersion);

    {
        BufWriter b;
        b.str(c.config.to_text());
        write_section(w, "config", b.buf);
    }
    {
        BufWriter b;
        b.put<std::uint32_t>(static_cast<std::uint32_t>(c.channel_pca.size()));
        for (std::size_t i = 0; i < c.channel_pca.size(); ++i) {
            write_reduction(b, c.channel_pca[i]);
            write_gmm(b, c.channel_gmm[i]);
        }
        write_section(w, "unsup", b.buf);
    }
    if (c.rep_reduction) {
        BufWriter b;
        write_reduction(b, *c.rep_reduction);
        write_section(w, "reduction", b.buf);
    }
    if (c.classifier == ClassifierKind::mlp) {
        BufWriter b;
        b.put<std::uint32_t>(static_cast<std::uint32_t>(c.nets.size()));
        for (const auto& m : c.nets) write_mlp(b, m);
        write_section(w, "mlp", b.buf);
    }
    if (c.classifier == ClassifierKind::svm) {
        BufWriter b;
        b.mat(c.svm->weights);
        b.vec(c.svm->bias);
        b.put<double>(c.svm->C);
        write_section(w, "svm", b.buf);
    }
    w.close();
}

ModelContainer load_container(const std::string& path) {
    io::Reader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError(path + ": not an FVC1 file");
    if (auto v = r.get<std::uint32_t>(); v != kVersion)
        throw DataError(path + ": unsupported container version " + std::to_string(v));

    ModelContainer c;
    bool have_config = false;
    while (!r.at_eof()) {
        const auto name_len = r.get<std::uint8_t>();
        const std::string name = r.str(name_len);
        const auto payload_len = r.get<std::uint64_t>();
        std::string payload(payload_len, '\0');
        r.raw(payload.data(), payload_len);
        BufReader b{payload.data(), payload.data() + payload.size()};
        if (name == "config") {
            c.config = PipelineConfig::parse(b.str());
            have_config = true;
        } else if (name == "unsup") {
            const auto n = b.get<std::uint32_t>();
            for (std::uint32_t i = 0; i < n; ++i) {
                c.channel_pca.push_back(read_reduction(b));
                c.channel_gmm.push_back(read_gmm(b));
            }
        } else if (name == "reduction") {
            c.rep_reduction = read_reduction(b);
        } else if (name == "mlp") {
            const auto n = b.get<std::uint32_t>();
            for (std::uint32_t i = 0; i < n; ++i) c.nets.push_back(read_mlp(b));
            c.classifier = ClassifierKind::mlp;
        } else if (name == "svm") {
            classify::LinearSvmModel m;
            m.weights = b.mat();
            m.bias = b.vec();
            m.C = b.get<double>();
            c.svm = std::move(m);
            c.classifier = ClassifierKind::svm;
        }
        // unknown sections are skipped for forward compatibility
    }
    if (!have_config) throw DataError(path + ": container missing config section");
    c.validate();
    return c;
}

}  // namespace fvstack::pipeline
