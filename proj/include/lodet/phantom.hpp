#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lodet/volume.hpp"

namespace lodet {

struct JitterSpec {
    double max_translation_vox = 2.0;
    double max_rotation_deg = 2.0;
};

// Knobs for one synthetic longitudinal study: sphere-like lesions that grow
// between timepoints and tube-like vessels that stay put (up to a rigid
// registration jitter), over a noisy, bias-modulated background.
struct PhantomSpec {
    Dims grid_dims{64, 64, 64};
    double spacing_mm = 1.0;

    int n_lesions = 4;
    std::array<double, 2> lesion_radius_range_vox{1.5, 6.0};
    int n_vessels = 4;
    std::array<double, 2> vessel_radius_range_vox{1.0, 2.5};

    // Equal lesion and vessel intensity by default: the detector has to rely
    // on 3D shape and temporal change, not brightness.
    double lesion_intensity = 1.0;
    double vessel_intensity = 1.0;
    double background_intensity = 0.0;
    double noise_sigma = 0.1;
    double bias_amplitude = 0.2;

    std::array<double, 2> growth_factor_range{1.2, 1.6};
    JitterSpec registration_jitter;
    int n_timepoints = 2;
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError naming the offending field
};

std::string phantom_spec_to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const std::string& text);  // missing fields keep defaults

struct LesionRecord {
    std::array<double, 3> center_vox{};
    double radius_vox = 0.0;
    int born_at_timepoint = 0;
};

struct StudyTimepoint {
    Volume image;
    MaskVolume reference_mask;
    std::vector<LesionRecord> lesion_records;
};

struct LongitudinalStudy {
    std::string patient_id;
    std::vector<StudyTimepoint> timepoints;

    bool has_prior(int t) const { return t > 0; }
};

// Voxel-center convention: voxel (x,y,z) is set iff the Euclidean distance
// from (x,y,z) to the sphere center is <= radius.
MaskVolume rasterize_sphere(const std::array<double, 3>& center_vox, double radius_vox,
                            const Dims& dims);

// All voxels within radius of the polyline (distance to the nearest segment).
// Waypoints may lie outside the grid; the mask is clipped to it.
MaskVolume rasterize_tube(const std::vector<std::array<double, 3>>& waypoints, double radius_vox,
                          const Dims& dims);

LongitudinalStudy generate_study(const PhantomSpec& spec);

}  // namespace lodet
