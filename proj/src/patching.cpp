#include "lodet/patching.hpp"

#include <algorithm>
#include <string>

#include "lodet/errors.hpp"
#include "lodet/rng.hpp"

namespace lodet {

namespace {

template <typename T>
std::vector<T> extract_generic(const std::vector<T>& data, const Dims& dims,
                               const std::array<int, 3>& center, int size, int stride) {
    std::vector<T> out(static_cast<std::size_t>(size) * size * size, T(0));
    const int half = (size - 1) / 2;
    std::size_t idx = 0;
    for (int kz = 0; kz < size; ++kz) {
        const int z = center[2] + (kz - half) * stride;
        for (int ky = 0; ky < size; ++ky) {
            const int y = center[1] + (ky - half) * stride;
            for (int kx = 0; kx < size; ++kx, ++idx) {
                const int x = center[0] + (kx - half) * stride;
                if (x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2]) {
                    out[idx] = data[linear_index(dims, x, y, z)];
                }
            }
        }
    }
    return out;
}

// Composable right-angle voxel transform on a cube of edge n: per-axis flips
// followed by k 90-degree rotations about one grid axis. Applied by mapping
// each destination voxel back to its source.
struct CubeTransform {
    bool flip[3] = {false, false, false};
    int rot_axis = 0;
    int rot_quarter = 0;  // number of 90-degree turns

    std::array<int, 3> source_of(std::array<int, 3> dst, int n) const {
        // Invert the rotation first (destination -> pre-rotation coordinates).
        const int u = (rot_axis + 1) % 3, v = (rot_axis + 2) % 3;
        for (int q = 0; q < (4 - rot_quarter % 4) % 4; ++q) {
            // Forward rotation maps (u,v) -> (v, n-1-u); this applies it
            // repeatedly to undo the net transform.
            const int du = dst[u], dv = dst[v];
            dst[u] = dv;
            dst[v] = n - 1 - du;
        }
        for (int a = 0; a < 3; ++a) {
            if (flip[a]) dst[a] = n - 1 - dst[a];
        }
        return dst;
    }

    template <typename T>
    std::vector<T> apply(const std::vector<T>& src, int n) const {
        std::vector<T> out(src.size());
        std::size_t idx = 0;
        for (int z = 0; z < n; ++z) {
            for (int y = 0; y < n; ++y) {
                for (int x = 0; x < n; ++x, ++idx) {
                    const auto s = source_of({x, y, z}, n);
                    out[idx] = src[linear_index({n, n, n}, s[0], s[1], s[2])];
                }
            }
        }
        return out;
    }
};

std::vector<int> axis_tile_starts(int dim, int tile) {
    std::vector<int> starts;
    int s = 0;
    for (;;) {
        starts.push_back(s);
        if (s + tile >= dim) break;
        s = std::min(s + tile, dim - tile);
    }
    return starts;
}

}  // namespace

void SegmentSpec::validate() const {
    if (main_size % 2 == 0) throw ValidationError("SegmentSpec: main_size must be odd");
    if (infer_size % 2 == 0) throw ValidationError("SegmentSpec: infer_size must be odd");
    if (n_conv_layers < 1) throw ValidationError("SegmentSpec: n_conv_layers must be >= 1");
    if (output_size() < 1) {
        throw ValidationError("SegmentSpec: main_size too small for " +
                              std::to_string(n_conv_layers) + " valid conv layers");
    }
    if (infer_output_size() < 1) {
        throw ValidationError("SegmentSpec: infer_size too small for " +
                              std::to_string(n_conv_layers) + " valid conv layers");
    }
    for (int f : lowres_factors) {
        if (f < 2) throw ValidationError("SegmentSpec: lowres factors must be >= 2");
    }
    if (!(tumor_fraction >= 0.0 && tumor_fraction <= 1.0)) {
        throw ValidationError("SegmentSpec: tumor_fraction must be in [0,1]");
    }
}

std::vector<float> extract_patch(const Volume& volume, const std::array<int, 3>& center, int size,
                                 int stride) {
    return extract_generic(volume.data, volume.dims, center, size, stride);
}

std::vector<std::uint8_t> extract_patch(const MaskVolume& mask, const std::array<int, 3>& center,
                                        int size, int stride) {
    return extract_generic(mask.data, mask.dims, center, size, stride);
}

SampleSet sample_segments(const LongitudinalStudy& study, int t, const SegmentSpec& spec,
                          int count, std::uint64_t seed) {
    spec.validate();
    if (count < 1) throw ValidationError("sample_segments: count must be >= 1");
    if (t < 0 || t >= static_cast<int>(study.timepoints.size())) {
        throw ValidationError("sample_segments: timepoint out of range");
    }
    const StudyTimepoint& tp = study.timepoints[static_cast<std::size_t>(t)];
    const Dims dims = tp.image.dims;
    const Volume* prior = study.has_prior(t) ? &study.timepoints[static_cast<std::size_t>(t) - 1].image
                                             : nullptr;

    std::vector<std::int64_t> tumor_voxels;
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(tp.reference_mask.data.size()); ++i) {
        if (tp.reference_mask.data[static_cast<std::size_t>(i)]) tumor_voxels.push_back(i);
    }

    SampleSet out;
    out.tumor_fallback = tumor_voxels.empty() && spec.tumor_fraction > 0.0;
    Rng rng(seed);
    out.segments.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        const bool want_tumor = rng.bernoulli(spec.tumor_fraction) && !tumor_voxels.empty();
        std::int64_t idx;
        if (want_tumor) {
            idx = tumor_voxels[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(tumor_voxels.size()) - 1))];
        } else {
            do {
                idx = rng.uniform_int(0, voxel_count(dims) - 1);
            } while (tp.reference_mask.data[static_cast<std::size_t>(idx)]);
        }
        TrainingSegment seg;
        seg.center_vox = {static_cast<int>(idx % dims[0]),
                          static_cast<int>((idx / dims[0]) % dims[1]),
                          static_cast<int>(idx / (static_cast<std::int64_t>(dims[0]) * dims[1]))};
        seg.is_tumor_sample = want_tumor;
        seg.main_patch = extract_patch(tp.image, seg.center_vox, spec.main_size, 1);
        for (int f : spec.lowres_factors) {
            seg.lowres_patches.push_back(extract_patch(tp.image, seg.center_vox, spec.main_size, f));
        }
        if (prior) {
            seg.prior_patch = extract_patch(*prior, seg.center_vox, spec.main_size, 1);
        } else {
            seg.prior_patch.assign(seg.main_patch.size(), 0.0f);
        }
        seg.label_patch = extract_patch(tp.reference_mask, seg.center_vox, spec.output_size(), 1);
        out.segments.push_back(std::move(seg));
    }
    return out;
}

TrainingSegment augment(const TrainingSegment& segment, const SegmentSpec& spec,
                        std::uint64_t seed) {
    Rng rng(seed);
    const float scale = static_cast<float>(rng.uniform(0.9, 1.1));
    CubeTransform xf;
    for (auto& f : xf.flip) f = rng.bernoulli(0.5);
    xf.rot_axis = static_cast<int>(rng.uniform_int(0, 2));
    xf.rot_quarter = static_cast<int>(rng.uniform_int(0, 3));

    TrainingSegment out;
    out.center_vox = segment.center_vox;
    out.is_tumor_sample = segment.is_tumor_sample;
    out.main_patch = xf.apply(segment.main_patch, spec.main_size);
    for (auto& v : out.main_patch) v *= scale;
    for (const auto& lr : segment.lowres_patches) {
        out.lowres_patches.push_back(xf.apply(lr, spec.main_size));
        for (auto& v : out.lowres_patches.back()) v *= scale;
    }
    out.prior_patch = xf.apply(segment.prior_patch, spec.main_size);
    for (auto& v : out.prior_patch) v *= scale;
    out.label_patch = xf.apply(segment.label_patch, spec.output_size());
    return out;
}

Tiling tile_volume(const Volume& image, const Volume* prior, const SegmentSpec& spec) {
    spec.validate();
    image.validate();
    if (prior) {
        prior->validate();
        if (!same_dims(prior->dims, image.dims)) {
            throw ValidationError("tile_volume: prior dims do not match image dims");
        }
    }
    const int tile = spec.infer_output_size();
    for (int k = 0; k < 3; ++k) {
        if (image.dims[k] < tile) {
            throw ValidationError("tile_volume: volume axis " + std::to_string(k) +
                                  " smaller than output tile size " + std::to_string(tile));
        }
    }

    Tiling out;
    out.dims = image.dims;
    out.out_tile = tile;
    const auto xs = axis_tile_starts(image.dims[0], tile);
    const auto ys = axis_tile_starts(image.dims[1], tile);
    const auto zs = axis_tile_starts(image.dims[2], tile);
    const int half = (tile - 1) / 2;
    for (int z0 : zs) {
        for (int y0 : ys) {
            for (int x0 : xs) {
                InferenceTile t;
                t.out_origin = {x0, y0, z0};
                const std::array<int, 3> center{x0 + half, y0 + half, z0 + half};
                t.main_patch = extract_patch(image, center, spec.infer_size, 1);
                for (int f : spec.lowres_factors) {
                    t.lowres_patches.push_back(extract_patch(image, center, spec.infer_size, f));
                }
                if (prior) {
                    t.prior_patch = extract_patch(*prior, center, spec.infer_size, 1);
                } else {
                    t.prior_patch.assign(t.main_patch.size(), 0.0f);
                }
                out.tiles.push_back(std::move(t));
            }
        }
    }
    return out;
}

Volume stitch_predictions(const std::vector<std::vector<float>>& tile_outputs,
                          const Tiling& tiling) {
    if (tile_outputs.size() != tiling.tiles.size()) {
        throw ValidationError("stitch_predictions: tile count mismatch");
    }
    const int tile = tiling.out_tile;
    const auto tile_voxels = static_cast<std::size_t>(tile) * tile * tile;
    Volume out = Volume::zeros(tiling.dims, 1.0, VolumeKind::probability);
    std::vector<std::uint8_t> covered(out.data.size(), 0);
    for (std::size_t i = 0; i < tiling.tiles.size(); ++i) {
        if (tile_outputs[i].size() != tile_voxels) {
            throw ValidationError("stitch_predictions: tile " + std::to_string(i) +
                                  " has wrong voxel count");
        }
        const auto& origin = tiling.tiles[i].out_origin;
        std::size_t src = 0;
        for (int z = 0; z < tile; ++z) {
            for (int y = 0; y < tile; ++y) {
                for (int x = 0; x < tile; ++x, ++src) {
                    const std::int64_t dst =
                        linear_index(tiling.dims, origin[0] + x, origin[1] + y, origin[2] + z);
                    out.data[static_cast<std::size_t>(dst)] = tile_outputs[i][src];
                    covered[static_cast<std::size_t>(dst)] = 1;
                }
            }
        }
    }
    for (auto c : covered) {
        if (!c) throw InternalError("stitch_predictions: placement does not cover the volume");
    }
    return out;
}

}  // namespace lodet
