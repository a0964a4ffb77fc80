#pragma once

#include <set>
#include <string>
#include <vector>

#include "fvstack/common.hpp"

namespace fvstack::desc {

struct ChannelSpec {
    std::string name;
    int raw_dim = 0;
};

// One trajectory: normalized (x,y,t) in [0,1] plus one raw descriptor row
// per declared channel.
struct TrajectoryRecord {
    float x = 0.f, y = 0.f, t = 0.f;
    std::vector<Vector> values;  // values[c].size() == channels[c].raw_dim
};

struct DescriptorSet {
    std::string video_id;
    std::set<int> labels;
    std::vector<ChannelSpec> channels;
    std::vector<TrajectoryRecord> records;

    int channel_index(const std::string& name) const;
    void validate() const;  // throws DataError on any broken invariant
};

struct TransformTag {
    int skip_level = 1;  // 1 = every frame
    bool mirrored = false;
};

DescriptorSet read_descriptors(const std::string& path);
void write_descriptors(const DescriptorSet& set, const std::string& path);

// l1-normalize then signed square root. All-zero rows pass through unchanged.
Vector rootsift(const Vector& v);

// Append (x,y,t) to a PCA-reduced row.
Vector augment_sta(const Vector& row, const TrajectoryRecord& rec);

// Stack records of all variants into one set (labels/channels from the first).
DescriptorSet dafs_stack(const std::vector<std::pair<TransformTag, DescriptorSet>>& variants);

// Simulated video transform on already-extracted descriptors: frame skipping
// keeps every skip_level-th record; mirroring maps x to 1-x and sign-flips the
// first mirror_flip_dims entries of channel mirror_channel.
DescriptorSet make_variant(const DescriptorSet& base, const TransformTag& tag,
                           int mirror_channel = 0, int mirror_flip_dims = 0);

struct SynthSpec {
    enum class Mode { separable, xor_clusters };
    std::vector<ChannelSpec> channels;
    int classes = 2;
    int videos_per_class = 10;
    int records_per_video = 50;
    double separation = 3.0;  // distance scale between class cluster centers
    double noise = 1.0;       // within-cluster std
    Mode mode = Mode::separable;
    bool multilabel = false;
};

std::vector<DescriptorSet> synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace fvstack::desc
