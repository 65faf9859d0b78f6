#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lodet/errors.hpp"

namespace lodet {

using Dims = std::array<int, 3>;

inline std::int64_t voxel_count(const Dims& d) {
    return static_cast<std::int64_t>(d[0]) * d[1] * d[2];
}

inline bool same_dims(const Dims& a, const Dims& b) { return a == b; }

// Linear index, x fastest (matches the VXG body order).
inline std::int64_t linear_index(const Dims& d, int x, int y, int z) {
    return x + static_cast<std::int64_t>(d[0]) * (y + static_cast<std::int64_t>(d[1]) * z);
}

enum class VolumeKind { image, probability };

struct VolumeMeta {
    std::string patient_id;
    int timepoint_index = 0;
};

// Dense 3D scalar grid. Images and probability maps.
struct Volume {
    Dims dims{0, 0, 0};
    double spacing_mm = 1.0;
    VolumeKind kind = VolumeKind::image;
    VolumeMeta meta;
    std::vector<float> data;

    float& at(int x, int y, int z) { return data[linear_index(dims, x, y, z)]; }
    float at(int x, int y, int z) const { return data[linear_index(dims, x, y, z)]; }

    static Volume zeros(const Dims& d, double spacing = 1.0, VolumeKind k = VolumeKind::image) {
        Volume v;
        v.dims = d;
        v.spacing_mm = spacing;
        v.kind = k;
        v.data.assign(static_cast<std::size_t>(voxel_count(d)), 0.0f);
        return v;
    }

    void validate() const;
};

// Dense binary 3D grid. Reference and predicted segmentations.
struct MaskVolume {
    Dims dims{0, 0, 0};
    double spacing_mm = 1.0;
    VolumeMeta meta;
    std::vector<std::uint8_t> data;

    std::uint8_t& at(int x, int y, int z) { return data[linear_index(dims, x, y, z)]; }
    std::uint8_t at(int x, int y, int z) const { return data[linear_index(dims, x, y, z)]; }

    static MaskVolume zeros(const Dims& d, double spacing = 1.0) {
        MaskVolume m;
        m.dims = d;
        m.spacing_mm = spacing;
        m.data.assign(static_cast<std::size_t>(voxel_count(d)), 0);
        return m;
    }

    std::int64_t positive_count() const {
        std::int64_t n = 0;
        for (auto v : data) n += v;
        return n;
    }

    void validate() const;
};

}  // namespace lodet
