#include "lodet/volume.hpp"

#include <string>

namespace lodet {

namespace {
void check_dims(const Dims& dims, std::size_t actual) {
    for (int k = 0; k < 3; ++k) {
        if (dims[k] <= 0) {
            throw ValidationError("volume dims must be positive, got axis " + std::to_string(k) +
                                  " = " + std::to_string(dims[k]));
        }
    }
    const auto expected = static_cast<std::size_t>(voxel_count(dims));
    if (actual != expected) {
        throw ValidationError("volume data length " + std::to_string(actual) +
                              " does not match dims product " + std::to_string(expected));
    }
}
}  // namespace

void Volume::validate() const {
    check_dims(dims, data.size());
    if (spacing_mm <= 0.0) throw ValidationError("spacing_mm must be positive");
    if (kind == VolumeKind::probability) {
        for (float v : data) {
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw ValidationError("probability volume has value outside [0,1]: " +
                                      std::to_string(v));
            }
        }
    }
}

void MaskVolume::validate() const {
    check_dims(dims, data.size());
    if (spacing_mm <= 0.0) throw ValidationError("spacing_mm must be positive");
    for (auto v : data) {
        if (v > 1) {
            throw ValidationError("mask volume has non-binary value " + std::to_string(int(v)));
        }
    }
}

}  // namespace lodet
