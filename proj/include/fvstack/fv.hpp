#pragma once

#include <set>
#include <string>
#include <vector>

#include "fvstack/common.hpp"
#include "fvstack/gmm.hpp"

namespace fvstack::fv {

struct FisherVector {
    enum class Stage { pooled_raw, normalized };
    std::string channel;
    Vector values;  // 2*K*D
    Stage stage = Stage::pooled_raw;
};

struct VideoRepresentation {
    std::string video_id;
    std::set<int> labels;
    Vector vector;  // unit l2 norm
};

// Eq.-style gradient encoding: per component, D first-order then D
// second-order values, components concatenated in order.
Vector fv_encode_row(const gmm::GmmModel& model, const Vector& x);

// Plain sum of per-row encodings (no 1/N), accumulated in 64-bit.
FisherVector fv_pool(const gmm::GmmModel& model, const Matrix& rows,
                     const std::string& channel = {});

Vector signed_sqrt(const Vector& v);
Vector l2_normalize(const Vector& v);  // zero vector maps to itself

// Per-channel signed sqrt + l2, concatenate in the given order, then the same
// normalization again on the concatenation.
VideoRepresentation finalize_video(const std::vector<FisherVector>& per_channel,
                                   const std::vector<std::string>& channel_order);

// FVR1 cache files for encoded representations.
void write_representation(const VideoRepresentation& rep, const std::string& path);
VideoRepresentation read_representation(const std::string& path);

}  // namespace fvstack::fv
