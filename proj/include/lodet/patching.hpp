#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "lodet/phantom.hpp"
#include "lodet/volume.hpp"

namespace lodet {

struct SegmentSpec {
    int main_size = 37;        // training segment edge (odd)
    int infer_size = 45;       // inference segment edge (odd)
    int n_conv_layers = 9;     // valid 3x3x3 layers; each trims 2 voxels per axis
    std::vector<int> lowres_factors{3, 5};
    double tumor_fraction = 0.5;

    int output_size() const { return main_size - 2 * n_conv_layers; }
    int infer_output_size() const { return infer_size - 2 * n_conv_layers; }
    void validate() const;
};

struct TrainingSegment {
    std::vector<float> main_patch;                 // main_size^3
    std::vector<std::vector<float>> lowres_patches;  // per factor, main_size^3, strided context
    std::vector<float> prior_patch;                // main_size^3; all zero when no prior exists
    std::vector<std::uint8_t> label_patch;         // output_size^3, center-cropped
    std::array<int, 3> center_vox{};
    bool is_tumor_sample = false;
};

struct SampleSet {
    std::vector<TrainingSegment> segments;
    // Tumor-centered sampling was requested but the mask was empty; all
    // segments fell back to background centers.
    bool tumor_fallback = false;
};

// Class-balanced segment sampling: each center is tumor-drawn with probability
// tumor_fraction, else a background voxel. Out-of-bounds patch regions are
// zero-padded. Deterministic under seed.
SampleSet sample_segments(const LongitudinalStudy& study, int t, const SegmentSpec& spec,
                          int count, std::uint64_t seed);

// Random intensity scale in [0.9, 1.1] on the image patches plus a shared
// geometric transform (axis flips and right-angle rotations) applied
// identically to main, low-res, prior, and label patches.
TrainingSegment augment(const TrainingSegment& segment, const SegmentSpec& spec,
                        std::uint64_t seed);

struct InferenceTile {
    std::vector<float> main_patch;                  // infer_size^3
    std::vector<float> prior_patch;                 // infer_size^3 (zeros when no prior)
    std::vector<std::vector<float>> lowres_patches; // per factor, infer_size^3
    std::array<int, 3> out_origin{};                // output-region origin in volume coords
};

struct Tiling {
    Dims dims{};      // volume dims the tiling covers
    int out_tile = 0; // infer_output_size
    std::vector<InferenceTile> tiles;
};

// Output regions tile the volume exactly; when the tile size does not divide
// the dims, the last tile per axis is shifted inward to align with the
// boundary (those overlaps are resolved last-write-wins when stitching).
Tiling tile_volume(const Volume& image, const Volume* prior, const SegmentSpec& spec);

// Inverse of tile_volume for the model outputs. tile_outputs[i] holds the
// out_tile^3 probabilities of tiles[i].
Volume stitch_predictions(const std::vector<std::vector<float>>& tile_outputs,
                          const Tiling& tiling);

// Patch extraction helper shared by sampling and tiling: patch voxel k maps to
// volume coordinate center + (k - (size-1)/2) * stride per axis; voxels outside
// the grid read as zero.
std::vector<float> extract_patch(const Volume& volume, const std::array<int, 3>& center, int size,
                                 int stride);
std::vector<std::uint8_t> extract_patch(const MaskVolume& mask, const std::array<int, 3>& center,
                                        int size, int stride);

}  // namespace lodet
