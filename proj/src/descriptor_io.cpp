#include "fvstack/descriptor_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "binio.hpp"

namespace fvstack::desc {

namespace {
constexpr char kMagic[4] = {'F', 'V', 'D', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

int DescriptorSet::channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i)
        if (channels[i].name == name) return static_cast<int>(i);
    throw DataError("unknown channel: " + name);
}

void DescriptorSet::validate() const {
    std::set<std::string> names;
    for (const auto& ch : channels) {
        if (ch.raw_dim <= 0) throw DataError("channel " + ch.name + ": raw_dim must be positive");
        if (!names.insert(ch.name).second)
            throw DataError("duplicate channel name: " + ch.name);
    }
    for (const auto& rec : records) {
        if (rec.values.size() != channels.size())
            throw DataError("record has " + std::to_string(rec.values.size()) +
                            " channel rows, expected " + std::to_string(channels.size()));
        for (std::size_t c = 0; c < channels.size(); ++c) {
            if (rec.values[c].size() != channels[c].raw_dim)
                throw DataError("channel " + channels[c].name + ": row dim " +
                                std::to_string(rec.values[c].size()) + " != " +
                                std::to_string(channels[c].raw_dim));
            if (!rec.values[c].allFinite())
                throw DataError("non-finite descriptor value in channel " + channels[c].name);
        }
        auto in01 = [](float v) { return v >= 0.f && v <= 1.f; };
        if (!in01(rec.x) || !in01(rec.y) || !in01(rec.t))
            throw DataError("record coordinates outside [0,1]");
    }
}

DescriptorSet read_descriptors(const std::string& path) {
    io::Reader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kMagic))
        throw DataError(path + ": malformed header, bad magic at byte offset 0");
    if (auto v = r.get<std::uint32_t>(); v != kVersion)
        throw DataError(path + ": unsupported version " + std::to_string(v));

    DescriptorSet set;
    set.video_id = path;
    const auto nch = r.get<std::uint32_t>();
    for (std::uint32_t c = 0; c < nch; ++c) {
        const auto name_len = r.get<std::uint8_t>();
        ChannelSpec spec;
        spec.name = r.str(name_len);
        spec.raw_dim = static_cast<int>(r.get<std::uint32_t>());
        if (spec.raw_dim <= 0)
            throw DataError(path + ": non-positive channel dim at byte offset " +
                            std::to_string(r.offset()));
        set.channels.push_back(std::move(spec));
    }
    const auto nlabels = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nlabels; ++i)
        set.labels.insert(static_cast<int>(r.get<std::uint32_t>()));

    const auto nrec = r.get<std::uint64_t>();
    set.records.reserve(nrec);
    for (std::uint64_t i = 0; i < nrec; ++i) {
        TrajectoryRecord rec;
        const std::uint64_t rec_off = r.offset();
        rec.x = r.get<float>();
        rec.y = r.get<float>();
        rec.t = r.get<float>();
        for (const auto& ch : set.channels) {
            Vector row(ch.raw_dim);
            for (int d = 0; d < ch.raw_dim; ++d) {
                const std::uint64_t off = r.offset();
                const float v = r.get<float>();
                if (!std::isfinite(v))
                    throw DataError(path + ": non-finite value at byte offset " +
                                    std::to_string(off));
                row[d] = v;
            }
            rec.values.push_back(std::move(row));
        }
        auto in01 = [](float v) { return v >= 0.f && v <= 1.f; };
        if (!in01(rec.x) || !in01(rec.y) || !in01(rec.t))
            throw DataError(path + ": coordinate outside [0,1] at byte offset " +
                            std::to_string(rec_off));
        set.records.push_back(std::move(rec));
    }
    return set;
}

void write_descriptors(const DescriptorSet& set, const std::string& path) {
    set.validate();
    io::Writer w(path);
    w.raw(kMagic, 4);
    w.put<std::uint32_t>(kVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(set.channels.size()));
    for (const auto& ch : set.channels) {
        w.put<std::uint8_t>(static_cast<std::uint8_t>(ch.name.size()));
        w.str(ch.name);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(ch.raw_dim));
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(set.labels.size()));
    for (int label : set.labels) w.put<std::uint32_t>(static_cast<std::uint32_t>(label));
    w.put<std::uint64_t>(set.records.size());
    for (const auto& rec : set.records) {
        w.put<float>(rec.x);
        w.put<float>(rec.y);
        w.put<float>(rec.t);
        for (const auto& row : rec.values)
            for (Eigen::Index d = 0; d < row.size(); ++d)
                w.put<float>(static_cast<float>(row[d]));
    }
    w.close();
}

Vector rootsift(const Vector& v) {
    const double l1 = v.cwiseAbs().sum();
    if (l1 == 0.0) return v;
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double s = v[i] < 0 ? -1.0 : 1.0;
        out[i] = s * std::sqrt(std::abs(v[i]) / l1);
    }
    return out;
}

Vector augment_sta(const Vector& row, const TrajectoryRecord& rec) {
    Vector out(row.size() + 3);
    out.head(row.size()) = row;
    out[row.size()] = rec.x;
    out[row.size() + 1] = rec.y;
    out[row.size() + 2] = rec.t;
    return out;
}

DescriptorSet dafs_stack(const std::vector<std::pair<TransformTag, DescriptorSet>>& variants) {
    if (variants.empty()) throw DataError("dafs_stack: no variants");
    DescriptorSet out = variants.front().second;
    for (std::size_t i = 1; i < variants.size(); ++i) {
        const auto& v = variants[i].second;
        if (v.channels.size() != out.channels.size())
            throw DataError("dafs_stack: channel count mismatch across variants");
        for (std::size_t c = 0; c < v.channels.size(); ++c)
            if (v.channels[c].name != out.channels[c].name ||
                v.channels[c].raw_dim != out.channels[c].raw_dim)
                throw DataError("dafs_stack: channel spec mismatch at " + v.channels[c].name);
        out.records.insert(out.records.end(), v.records.begin(), v.records.end());
    }
    return out;
}

DescriptorSet make_variant(const DescriptorSet& base, const TransformTag& tag,
                           int mirror_channel, int mirror_flip_dims) {
    if (tag.skip_level < 1) throw DataError("make_variant: skip_level must be >= 1");
    DescriptorSet out;
    out.video_id = base.video_id;
    out.labels = base.labels;
    out.channels = base.channels;
    for (std::size_t i = 0; i < base.records.size(); i += tag.skip_level) {
        TrajectoryRecord rec = base.records[i];
        if (tag.mirrored) {
            rec.x = 1.f - rec.x;
            if (mirror_channel >= 0 && mirror_channel < static_cast<int>(rec.values.size())) {
                auto& row = rec.values[mirror_channel];
                const int n = std::min<int>(mirror_flip_dims, static_cast<int>(row.size()));
                row.head(n) = -row.head(n);
            }
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

std::vector<DescriptorSet> synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.classes < 1 || spec.videos_per_class < 1 || spec.records_per_video < 1)
        throw ConfigError("synth_generate: counts must be positive");
    if (spec.noise < 0) throw ConfigError("synth_generate: noise must be non-negative");
    if (spec.channels.empty()) throw ConfigError("synth_generate: no channels");
    if (spec.mode == SynthSpec::Mode::xor_clusters && spec.classes != 2)
        throw ConfigError("synth_generate: xor mode requires exactly 2 classes");

    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Each class gets one unit direction per channel; cluster center is
    // separation * direction, so separation 0 collapses all classes together.
    const int total_dim = [&] {
        int d = 0;
        for (const auto& ch : spec.channels) d += ch.raw_dim;
        return d;
    }();
    auto random_direction = [&](int dim) {
        Vector v(dim);
        for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
        const double n = v.norm();
        return n > 0 ? Vector(v / n) : v;
    };

    // Cluster layout: separable mode has one cluster per class. XOR mode has
    // two antipodal clusters per class arranged so no hyperplane in descriptor
    // space splits the classes: class 0 owns {+u+w, -u-w}, class 1 {+u-w, -u+w}.
    struct Cluster {
        Vector center;  // total_dim
    };
    std::vector<std::vector<Cluster>> per_class(spec.classes);
    if (spec.mode == SynthSpec::Mode::separable) {
        for (int c = 0; c < spec.classes; ++c)
            per_class[c].push_back({Vector(spec.separation * random_direction(total_dim))});
    } else {
        if (total_dim < 3)
            throw ConfigError("synth_generate: xor mode needs at least 3 total dims");
        // Parity arrangement: three directions with disjoint supports, eight
        // clusters at +-u +-v +-w, class = parity of the sign pattern. The
        // classes then share their first AND second moments exactly, so no
        // linear rule over mean/variance statistics separates them, while the
        // joint sign pattern remains decodable by a non-linear classifier.
        const int third = total_dim / 3;
        Vector dirs[3];
        for (int i = 0; i < 3; ++i) {
            const int lo = i * third;
            const int len = i == 2 ? total_dim - 2 * third : third;
            dirs[i] = Vector::Zero(total_dim);
            dirs[i].segment(lo, len) = random_direction(len);
        }
        const double s = spec.separation;
        for (int pattern = 0; pattern < 8; ++pattern) {
            Vector center = Vector::Zero(total_dim);
            int parity = 0;
            for (int i = 0; i < 3; ++i) {
                const int sign_bit = (pattern >> i) & 1;
                center += (sign_bit ? -s : s) * dirs[i];
                parity ^= sign_bit;
            }
            per_class[parity].push_back({center});
        }
    }

    std::vector<DescriptorSet> out;
    for (int c = 0; c < spec.classes; ++c) {
        for (int v = 0; v < spec.videos_per_class; ++v) {
            DescriptorSet set;
            set.video_id = "synth_c" + std::to_string(c) + "_v" + std::to_string(v);
            set.labels = {c};
            // multilabel: every other video additionally carries the next class
            if (spec.multilabel && spec.classes > 1 && v % 2 == 1)
                set.labels.insert((c + 1) % spec.classes);
            set.channels = spec.channels;
            const auto& cluster =
                per_class[c][static_cast<std::size_t>(v) % per_class[c].size()];
            for (int rix = 0; rix < spec.records_per_video; ++rix) {
                TrajectoryRecord rec;
                rec.x = static_cast<float>(unif(rng));
                rec.y = static_cast<float>(unif(rng));
                rec.t = spec.records_per_video > 1
                            ? static_cast<float>(rix) / static_cast<float>(spec.records_per_video - 1)
                            : 0.f;
                int off = 0;
                for (const auto& ch : spec.channels) {
                    Vector row(ch.raw_dim);
                    // values round-trip the binary32 storage format exactly
                    for (int d = 0; d < ch.raw_dim; ++d)
                        row[d] = static_cast<float>(cluster.center[off + d] +
                                                    spec.noise * gauss(rng));
                    off += ch.raw_dim;
                    rec.values.push_back(std::move(row));
                }
                set.records.push_back(std::move(rec));
            }
            out.push_back(std::move(set));
        }
    }
    return out;
}

}  // namespace fvstack::desc
