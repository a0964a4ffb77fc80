#include "fvstack/fv.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"

namespace fvstack::fv {

Vector fv_encode_row(const gmm::GmmModel& model, const Vector& x) {
    if (x.size() != model.dim) throw DataError("fv_encode_row: dimension mismatch");
    const Vector gamma = gmm::posterior(model, x);
    Vector out(2 * model.K * model.dim);
    for (int k = 0; k < model.K; ++k) {
        const auto z = (x.transpose() - model.means.row(k)).cwiseQuotient(model.stds.row(k));
        const double a = gamma[k] / std::sqrt(model.weights[k]);
        const double b = gamma[k] / std::sqrt(2.0 * model.weights[k]);
        out.segment(2 * k * model.dim, model.dim) = a * z.transpose();
        out.segment((2 * k + 1) * model.dim, model.dim) =
            b * (z.array().square() - 1.0).matrix().transpose();
    }
    return out;
}

FisherVector fv_pool(const gmm::GmmModel& model, const Matrix& rows,
                     const std::string& channel) {
    if (rows.rows() < 1) throw DataError("fv_pool: empty row set");
    FisherVector fvv;
    fvv.channel = channel;
    fvv.stage = FisherVector::Stage::pooled_raw;
    fvv.values = Vector::Zero(2 * model.K * model.dim);
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        fvv.values += fv_encode_row(model, rows.row(i));
    return fvv;
}

Vector signed_sqrt(const Vector& v) {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double s = v[i] < 0 ? -1.0 : 1.0;
        out[i] = s * std::sqrt(std::abs(v[i]));
    }
    return out;
}

Vector l2_normalize(const Vector& v) {
    const double n = v.norm();
    return n > 0 ? Vector(v / n) : v;
}

VideoRepresentation finalize_video(const std::vector<FisherVector>& per_channel,
                                   const std::vector<std::string>& channel_order) {
    if (per_channel.size() != channel_order.size())
        throw DataError("finalize_video: channel set mismatch with configuration");
    Eigen::Index total = 0;
    for (std::size_t c = 0; c < per_channel.size(); ++c) {
        if (per_channel[c].channel != channel_order[c])
            throw DataError("finalize_video: channel order mismatch at position " +
                            std::to_string(c) + " (" + per_channel[c].channel + " vs " +
                            channel_order[c] + ")");
        total += per_channel[c].values.size();
    }
    Vector concat(total);
    Eigen::Index off = 0;
    for (const auto& fvv : per_channel) {
        concat.segment(off, fvv.values.size()) = l2_normalize(signed_sqrt(fvv.values));
        off += fvv.values.size();
    }
    VideoRepresentation rep;
    rep.vector = l2_normalize(signed_sqrt(concat));
    return rep;
}

namespace {
constexpr char kMagic[4] = {'F', 'V', 'R', '1'};
}

void write_representation(const VideoRepresentation& rep, const std::string& path) {
    io::Writer w(path);
    w.raw(kMagic, 4);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rep.vector.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(rep.labels.size()));
    for (int label : rep.labels) w.put<std::uint32_t>(static_cast<std::uint32_t>(label));
    for (Eigen::Index i = 0; i < rep.vector.size(); ++i)
        w.put<float>(static_cast<float>(rep.vector[i]));
    w.close();
}

VideoRepresentation read_representation(const std::string& path) {
    io::Reader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (!std::equal(magic, magic + 4, kMagic))
        throw DataError(path + ": not an FVR1 file");
    VideoRepresentation rep;
    rep.video_id = path;
    const auto dim = r.get<std::uint32_t>();
    const auto nlabels = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < nlabels; ++i)
        rep.labels.insert(static_cast<int>(r.get<std::uint32_t>()));
    rep.vector = Vector(dim);
    for (std::uint32_t i = 0; i < dim; ++i) rep.vector[i] = r.get<float>();
    return rep;
}

}  // namespace fvstack::fv
