#include "lodet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "lodet/errors.hpp"
#include "lodet/rng.hpp"

namespace lodet {

using nlohmann::json;
using Vec3 = std::array<double, 3>;

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Squared distance from point p to segment [a, b].
double point_segment_dist2(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 ab = sub(b, a);
    const double len2 = dot(ab, ab);
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(dot(sub(p, a), ab) / len2, 0.0, 1.0);
    const Vec3 q{a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]};
    const Vec3 d = sub(p, q);
    return dot(d, d);
}

// Rigid transform: rotate about the grid center, then translate.
struct RigidTransform {
    double rot[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    Vec3 translation{0, 0, 0};
    Vec3 pivot{0, 0, 0};

    Vec3 apply(const Vec3& p) const {
        const Vec3 c = sub(p, pivot);
        Vec3 r{rot[0][0] * c[0] + rot[0][1] * c[1] + rot[0][2] * c[2],
               rot[1][0] * c[0] + rot[1][1] * c[1] + rot[1][2] * c[2],
               rot[2][0] * c[0] + rot[2][1] * c[1] + rot[2][2] * c[2]};
        return add(add(r, pivot), translation);
    }
};

RigidTransform random_jitter(const JitterSpec& jitter, const Dims& dims, Rng& rng) {
    RigidTransform t;
    t.pivot = {(dims[0] - 1) / 2.0, (dims[1] - 1) / 2.0, (dims[2] - 1) / 2.0};
    // Uniform random axis, angle uniform in [-max, max].
    Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
    const double axis_norm = norm(axis);
    if (axis_norm < 1e-12) axis = {0, 0, 1};
    else for (auto& v : axis) v /= axis_norm;
    const double angle = rng.uniform(-jitter.max_rotation_deg, jitter.max_rotation_deg) * kPi / 180.0;
    const double c = std::cos(angle), s = std::sin(angle), omc = 1.0 - c;
    const double x = axis[0], y = axis[1], z = axis[2];
    const double rot[3][3] = {{c + x * x * omc, x * y * omc - z * s, x * z * omc + y * s},
                              {y * x * omc + z * s, c + y * y * omc, y * z * omc - x * s},
                              {z * x * omc - y * s, z * y * omc + x * s, c + z * z * omc}};
    std::copy(&rot[0][0], &rot[0][0] + 9, &t.rot[0][0]);
    for (int k = 0; k < 3; ++k) {
        t.translation[k] =
            rng.uniform(-jitter.max_translation_vox, jitter.max_translation_vox);
    }
    return t;
}

struct VesselGeometry {
    std::vector<Vec3> waypoints;
    double radius = 0.0;
};

struct ClippedBox {
    int x0, x1, y0, y1, z0, z1;
};

ClippedBox clip_box(const Dims& dims, const Vec3& lo, const Vec3& hi, double radius) {
    return ClippedBox{
        std::max(0, static_cast<int>(std::ceil(lo[0] - radius))),
        std::min(dims[0] - 1, static_cast<int>(std::floor(hi[0] + radius))),
        std::max(0, static_cast<int>(std::ceil(lo[1] - radius))),
        std::min(dims[1] - 1, static_cast<int>(std::floor(hi[1] + radius))),
        std::max(0, static_cast<int>(std::ceil(lo[2] - radius))),
        std::min(dims[2] - 1, static_cast<int>(std::floor(hi[2] + radius)))};
}

// Paints `value` into image (if given) over the sphere support and sets mask (if given).
void paint_sphere(Volume* image, MaskVolume* mask, const Dims& dims, const Vec3& center,
                  double radius, float value) {
    const double r2 = radius * radius;
    const ClippedBox b = clip_box(dims, center, center, radius);
    for (int z = b.z0; z <= b.z1; ++z) {
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                const double dx = x - center[0], dy = y - center[1], dz = z - center[2];
                if (dx * dx + dy * dy + dz * dz <= r2) {
                    if (image) image->at(x, y, z) = value;
                    if (mask) mask->at(x, y, z) = 1;
                }
            }
        }
    }
}

void paint_tube(Volume* image, MaskVolume* mask, const Dims& dims,
                const std::vector<Vec3>& waypoints, double radius, float value) {
    const double r2 = radius * radius;
    for (std::size_t s = 0; s + 1 < waypoints.size(); ++s) {
        const Vec3& a = waypoints[s];
        const Vec3& b = waypoints[s + 1];
        const Vec3 lo{std::min(a[0], b[0]), std::min(a[1], b[1]), std::min(a[2], b[2])};
        const Vec3 hi{std::max(a[0], b[0]), std::max(a[1], b[1]), std::max(a[2], b[2])};
        const ClippedBox box = clip_box(dims, lo, hi, radius);
        for (int z = box.z0; z <= box.z1; ++z) {
            for (int y = box.y0; y <= box.y1; ++y) {
                for (int x = box.x0; x <= box.x1; ++x) {
                    const Vec3 p{double(x), double(y), double(z)};
                    if (point_segment_dist2(p, a, b) <= r2) {
                        if (image) image->at(x, y, z) = value;
                        if (mask) mask->at(x, y, z) = 1;
                    }
                }
            }
        }
    }
}

double polyline_distance(const Vec3& p, const std::vector<Vec3>& waypoints) {
    double best = std::numeric_limits<double>::max();
    for (std::size_t s = 0; s + 1 < waypoints.size(); ++s) {
        best = std::min(best, point_segment_dist2(p, waypoints[s], waypoints[s + 1]));
    }
    return std::sqrt(best);
}

// Smooth multiplicative bias: 1 + amplitude * Q(u,v,w), where Q is a random
// quadratic in grid coordinates normalized to [-1,1] and scaled so |Q| <= 1.
struct BiasField {
    double amplitude = 0.0;
    std::array<double, 9> coeff{};
    double coeff_norm = 1.0;
    Dims dims{};

    static BiasField random(double amplitude, const Dims& dims, Rng& rng) {
        BiasField f;
        f.amplitude = amplitude;
        f.dims = dims;
        double total = 0.0;
        for (auto& c : f.coeff) {
            c = rng.uniform(-1.0, 1.0);
            total += std::abs(c);
        }
        f.coeff_norm = std::max(total, 1e-12);
        return f;
    }

    double at(int x, int y, int z) const {
        const double u = dims[0] > 1 ? 2.0 * x / (dims[0] - 1) - 1.0 : 0.0;
        const double v = dims[1] > 1 ? 2.0 * y / (dims[1] - 1) - 1.0 : 0.0;
        const double w = dims[2] > 1 ? 2.0 * z / (dims[2] - 1) - 1.0 : 0.0;
        const double q = coeff[0] * u + coeff[1] * v + coeff[2] * w + coeff[3] * u * v +
                         coeff[4] * u * w + coeff[5] * v * w + coeff[6] * u * u +
                         coeff[7] * v * v + coeff[8] * w * w;
        return 1.0 + amplitude * q / coeff_norm;
    }
};

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ValidationError("PhantomSpec." + field + ": " + what);
}

}  // namespace

void PhantomSpec::validate() const {
    for (int k = 0; k < 3; ++k) {
        require(grid_dims[k] >= 16, "grid_dims", "all axes must be >= 16");
    }
    require(spacing_mm > 0, "spacing_mm", "must be positive");
    require(n_lesions >= 0, "n_lesions", "must be non-negative");
    require(n_vessels >= 0, "n_vessels", "must be non-negative");
    require(lesion_radius_range_vox[0] >= 1.0, "lesion_radius_range_vox", "min must be >= 1");
    require(lesion_radius_range_vox[1] >= lesion_radius_range_vox[0], "lesion_radius_range_vox",
            "max must be >= min");
    require(vessel_radius_range_vox[0] > 0, "vessel_radius_range_vox", "min must be positive");
    require(vessel_radius_range_vox[1] >= vessel_radius_range_vox[0], "vessel_radius_range_vox",
            "max must be >= min");
    require(noise_sigma >= 0, "noise_sigma", "must be non-negative");
    require(bias_amplitude >= 0, "bias_amplitude", "must be non-negative");
    require(growth_factor_range[0] >= 1.0, "growth_factor_range",
            "min must be >= 1 (lesions never shrink)");
    require(growth_factor_range[1] >= growth_factor_range[0], "growth_factor_range",
            "max must be >= min");
    require(registration_jitter.max_translation_vox >= 0, "registration_jitter",
            "max_translation_vox must be non-negative");
    require(registration_jitter.max_rotation_deg >= 0, "registration_jitter",
            "max_rotation_deg must be non-negative");
    require(n_timepoints >= 1, "n_timepoints", "must be >= 1");
}

std::string phantom_spec_to_json(const PhantomSpec& s) {
    json j{{"grid_dims", {s.grid_dims[0], s.grid_dims[1], s.grid_dims[2]}},
           {"spacing_mm", s.spacing_mm},
           {"n_lesions", s.n_lesions},
           {"lesion_radius_range_vox", {s.lesion_radius_range_vox[0], s.lesion_radius_range_vox[1]}},
           {"n_vessels", s.n_vessels},
           {"vessel_radius_range_vox", {s.vessel_radius_range_vox[0], s.vessel_radius_range_vox[1]}},
           {"lesion_intensity", s.lesion_intensity},
           {"vessel_intensity", s.vessel_intensity},
           {"background_intensity", s.background_intensity},
           {"noise_sigma", s.noise_sigma},
           {"bias_amplitude", s.bias_amplitude},
           {"growth_factor_range", {s.growth_factor_range[0], s.growth_factor_range[1]}},
           {"registration_jitter",
            {{"max_translation_vox", s.registration_jitter.max_translation_vox},
             {"max_rotation_deg", s.registration_jitter.max_rotation_deg}}},
           {"n_timepoints", s.n_timepoints},
           {"seed", s.seed}};
    return j.dump(2);
}

PhantomSpec phantom_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("unparseable phantom spec: ") + e.what());
    }
    PhantomSpec s;
    try {
        if (j.contains("grid_dims")) {
            for (int k = 0; k < 3; ++k) s.grid_dims[k] = j["grid_dims"].at(k).get<int>();
        }
        s.spacing_mm = j.value("spacing_mm", s.spacing_mm);
        s.n_lesions = j.value("n_lesions", s.n_lesions);
        if (j.contains("lesion_radius_range_vox")) {
            for (int k = 0; k < 2; ++k)
                s.lesion_radius_range_vox[k] = j["lesion_radius_range_vox"].at(k).get<double>();
        }
        s.n_vessels = j.value("n_vessels", s.n_vessels);
        if (j.contains("vessel_radius_range_vox")) {
            for (int k = 0; k < 2; ++k)
                s.vessel_radius_range_vox[k] = j["vessel_radius_range_vox"].at(k).get<double>();
        }
        s.lesion_intensity = j.value("lesion_intensity", s.lesion_intensity);
        s.vessel_intensity = j.value("vessel_intensity", s.vessel_intensity);
        s.background_intensity = j.value("background_intensity", s.background_intensity);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.bias_amplitude = j.value("bias_amplitude", s.bias_amplitude);
        if (j.contains("growth_factor_range")) {
            for (int k = 0; k < 2; ++k)
                s.growth_factor_range[k] = j["growth_factor_range"].at(k).get<double>();
        }
        if (j.contains("registration_jitter")) {
            const auto& rj = j["registration_jitter"];
            s.registration_jitter.max_translation_vox =
                rj.value("max_translation_vox", s.registration_jitter.max_translation_vox);
            s.registration_jitter.max_rotation_deg =
                rj.value("max_rotation_deg", s.registration_jitter.max_rotation_deg);
        }
        s.n_timepoints = j.value("n_timepoints", s.n_timepoints);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed phantom spec: ") + e.what());
    }
    return s;
}

MaskVolume rasterize_sphere(const Vec3& center_vox, double radius_vox, const Dims& dims) {
    if (radius_vox <= 0.0) throw ValidationError("rasterize_sphere: radius must be positive");
    for (int k = 0; k < 3; ++k) {
        if (!(center_vox[k] >= 0.0 && center_vox[k] <= dims[k] - 1)) {
            throw ValidationError("rasterize_sphere: center outside grid on axis " +
                                  std::to_string(k));
        }
    }
    MaskVolume mask = MaskVolume::zeros(dims);
    paint_sphere(nullptr, &mask, dims, center_vox, radius_vox, 1.0f);
    return mask;
}

MaskVolume rasterize_tube(const std::vector<Vec3>& waypoints, double radius_vox,
                          const Dims& dims) {
    if (waypoints.size() < 2) {
        throw ValidationError("rasterize_tube: need at least 2 waypoints");
    }
    if (radius_vox <= 0.0) throw ValidationError("rasterize_tube: radius must be positive");
    MaskVolume mask = MaskVolume::zeros(dims);
    paint_tube(nullptr, &mask, dims, waypoints, radius_vox, 1.0f);
    return mask;
}

LongitudinalStudy generate_study(const PhantomSpec& spec) {
    spec.validate();
    const Dims dims = spec.grid_dims;
    Rng study_rng(spec.seed);

    // Worst-case displacement any scene point can see from the jitter: full
    // translation plus rotation of the farthest corner about the grid center.
    const double half_diag = 0.5 * std::sqrt(double(dims[0]) * dims[0] + double(dims[1]) * dims[1] +
                                             double(dims[2]) * dims[2]);
    const double jitter_bound = spec.registration_jitter.max_translation_vox +
                                half_diag * spec.registration_jitter.max_rotation_deg * kPi / 180.0;

    // --- canonical scene ---
    Rng scene_rng = study_rng.fork(1);

    std::vector<VesselGeometry> vessels;
    for (int i = 0; i < spec.n_vessels; ++i) {
        VesselGeometry vessel;
        vessel.radius = scene_rng.uniform(spec.vessel_radius_range_vox[0],
                                          spec.vessel_radius_range_vox[1]);
        // A mostly straight polyline crossing the grid along a random axis.
        const int axis = static_cast<int>(scene_rng.uniform_int(0, 2));
        Vec3 entry{}, exit{};
        for (int k = 0; k < 3; ++k) {
            entry[k] = scene_rng.uniform(0.15 * dims[k], 0.85 * dims[k]);
            exit[k] = scene_rng.uniform(0.15 * dims[k], 0.85 * dims[k]);
        }
        entry[axis] = -2.0;
        exit[axis] = dims[axis] + 1.0;
        const int n_way = 5;
        for (int w = 0; w < n_way; ++w) {
            const double t = double(w) / (n_way - 1);
            Vec3 p{entry[0] + t * (exit[0] - entry[0]), entry[1] + t * (exit[1] - entry[1]),
                   entry[2] + t * (exit[2] - entry[2])};
            if (w > 0 && w + 1 < n_way) {
                for (int k = 0; k < 3; ++k) {
                    if (k != axis) p[k] += scene_rng.uniform(-0.08, 0.08) * dims[k];
                }
            }
            vessel.waypoints.push_back(p);
        }
        vessels.push_back(std::move(vessel));
    }

    // Per-lesion growth schedule first, so placement margins can account for
    // the final radius.
    std::vector<double> base_radius(spec.n_lesions);
    std::vector<std::vector<double>> radius_at(spec.n_lesions);
    Rng growth_rng = study_rng.fork(2);
    for (int j = 0; j < spec.n_lesions; ++j) {
        base_radius[j] =
            growth_rng.uniform(spec.lesion_radius_range_vox[0], spec.lesion_radius_range_vox[1]);
        radius_at[j].resize(spec.n_timepoints);
        radius_at[j][0] = base_radius[j];
        for (int t = 1; t < spec.n_timepoints; ++t) {
            radius_at[j][t] = radius_at[j][t - 1] * growth_rng.uniform(spec.growth_factor_range[0],
                                                                       spec.growth_factor_range[1]);
        }
    }

    std::vector<Vec3> lesion_centers(spec.n_lesions);
    for (int j = 0; j < spec.n_lesions; ++j) {
        const double final_radius = radius_at[j][spec.n_timepoints - 1];
        const double margin = final_radius + jitter_bound + 1.0;
        bool feasible = true;
        for (int k = 0; k < 3; ++k) {
            if (margin > (dims[k] - 1) / 2.0) feasible = false;
        }
        if (!feasible) {
            throw GenerationError(
                "phantom generation failed: lesion_radius_range_vox/growth_factor_range too large "
                "for grid_dims");
        }
        bool placed = false;
        for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
            Vec3 c{scene_rng.uniform(margin, dims[0] - 1 - margin),
                   scene_rng.uniform(margin, dims[1] - 1 - margin),
                   scene_rng.uniform(margin, dims[2] - 1 - margin)};
            bool ok = true;
            for (int i = 0; i < j && ok; ++i) {
                const double min_sep =
                    final_radius + radius_at[i][spec.n_timepoints - 1] + 2.0;
                if (norm(sub(c, lesion_centers[i])) < min_sep) ok = false;
            }
            for (const auto& vessel : vessels) {
                if (!ok) break;
                const double clearance = final_radius + vessel.radius + 1.5;
                if (polyline_distance(c, vessel.waypoints) < clearance) ok = false;
            }
            if (ok) {
                lesion_centers[j] = c;
                placed = true;
            }
        }
        if (!placed) {
            throw GenerationError(
                "phantom generation failed: could not place lesion without overlap; reduce "
                "n_lesions or lesion_radius_range_vox");
        }
    }

    // --- render each timepoint ---
    LongitudinalStudy study;
    study.timepoints.reserve(spec.n_timepoints);
    for (int t = 0; t < spec.n_timepoints; ++t) {
        RigidTransform xform;  // identity at t = 0
        if (t > 0) {
            Rng jitter_rng = study_rng.fork(100 + static_cast<std::uint64_t>(t));
            xform = random_jitter(spec.registration_jitter, dims, jitter_rng);
        }

        StudyTimepoint tp;
        tp.image = Volume::zeros(dims, spec.spacing_mm, VolumeKind::image);
        tp.image.meta.timepoint_index = t;
        std::fill(tp.image.data.begin(), tp.image.data.end(),
                  static_cast<float>(spec.background_intensity));
        tp.reference_mask = MaskVolume::zeros(dims, spec.spacing_mm);
        tp.reference_mask.meta.timepoint_index = t;

        for (const auto& vessel : vessels) {
            std::vector<Vec3> moved;
            moved.reserve(vessel.waypoints.size());
            for (const auto& w : vessel.waypoints) moved.push_back(xform.apply(w));
            paint_tube(&tp.image, nullptr, dims, moved, vessel.radius,
                       static_cast<float>(spec.vessel_intensity));
        }
        for (int j = 0; j < spec.n_lesions; ++j) {
            const Vec3 c = xform.apply(lesion_centers[j]);
            paint_sphere(&tp.image, &tp.reference_mask, dims, c, radius_at[j][t],
                         static_cast<float>(spec.lesion_intensity));
            tp.lesion_records.push_back(LesionRecord{c, radius_at[j][t], 0});
        }

        if (spec.bias_amplitude > 0.0) {
            Rng bias_rng = study_rng.fork(200 + static_cast<std::uint64_t>(t));
            const BiasField bias = BiasField::random(spec.bias_amplitude, dims, bias_rng);
            std::size_t idx = 0;
            for (int z = 0; z < dims[2]; ++z) {
                for (int y = 0; y < dims[1]; ++y) {
                    for (int x = 0; x < dims[0]; ++x, ++idx) {
                        tp.image.data[idx] =
                            static_cast<float>(tp.image.data[idx] * bias.at(x, y, z));
                    }
                }
            }
        }
        if (spec.noise_sigma > 0.0) {
            Rng noise_rng = study_rng.fork(300 + static_cast<std::uint64_t>(t));
            for (auto& v : tp.image.data) {
                v += static_cast<float>(noise_rng.normal() * spec.noise_sigma);
            }
        }
        study.timepoints.push_back(std::move(tp));
    }
    return study;
}

}  // namespace lodet
