#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lodet/volume.hpp"

namespace lodet {

enum class Connectivity { six = 6, twentysix = 26 };

struct LabeledComponents {
    Dims dims{0, 0, 0};
    std::vector<int> labels;  // 0 = background, components numbered 1..n
    int n_components = 0;
    std::vector<std::vector<std::int64_t>> component_voxels;  // [component-1] -> linear indices
    std::vector<std::int64_t> component_sizes;
    Connectivity connectivity = Connectivity::twentysix;
};

MaskVolume binarize(const Volume& prob, double threshold = 0.5);  // voxel = 1 iff prob >= threshold

LabeledComponents connected_components(const MaskVolume& mask,
                                       Connectivity connectivity = Connectivity::twentysix);

// Subvolume-level sensitivity/specificity/precision. Both masks are cut into
// the same non-overlapping tile grid (tiles start at multiples of tile_size;
// a non-dividing tail tile is clipped to the boundary). A tile is positive iff
// it contains at least one set voxel.
struct SubvolumeMetrics {
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    // No positive predictions: precision is reported as 1 with this flag set.
    bool precision_degenerate = false;
};

SubvolumeMetrics subvolume_metrics(const MaskVolume& pred, const MaskVolume& ref, int tile_size);

// Lesion-level report. A reference lesion counts as detected (TP) iff at least
// one predicted voxel overlaps it. A predicted component is FP iff it overlaps
// no reference lesion. Sensitivity counts reference lesions; precision counts
// predicted components, so a component spanning two lesions is counted once.
struct LesionMatchReport {
    std::vector<int> tp_lesions;     // reference component ids (1-based)
    std::vector<int> fn_lesions;     // reference component ids
    std::vector<int> fp_components;  // predicted component ids
    std::vector<double> tp_dsc;      // per detected reference lesion

    int n_ref_lesions = 0;
    int n_pred_components = 0;
    int fp_count = 0;
    double sensitivity = 0.0;  // 1 (flagged) when there are no reference lesions
    double precision = 0.0;    // 1 (flagged) when there are no predicted components
    double mdsc = 0.0;         // mean DSC over TP lesions; 0 when there are none
    bool sensitivity_degenerate = false;
    bool precision_degenerate = false;
};

LesionMatchReport lesion_match(const MaskVolume& pred, const MaskVolume& ref);

struct CurvePoints {
    std::vector<std::array<double, 2>> points;  // x non-decreasing
    double auc = 0.0;                           // trapezoidal integral of the stored points
};

// One point per threshold: binarize then subvolume_metrics;
// x = 1 - specificity, y = sensitivity. Thresholds must be sorted descending
// and include both 0 and 1.
CurvePoints roc_points(const Volume& prob, const MaskVolume& ref, int tile_size,
                       const std::vector<double>& thresholds);

// Same sweep over several volumes at once, pooling the subvolume counts per
// threshold before computing the rates.
CurvePoints roc_points_aggregate(const std::vector<const Volume*>& probs,
                                 const std::vector<const MaskVolume*>& refs, int tile_size,
                                 const std::vector<double>& thresholds);

// Precision-recall curve across trained models: one (sensitivity, precision)
// pair per model. Points are sorted by recall before integrating.
CurvePoints pr_points(const std::vector<std::array<double, 2>>& sensitivity_precision);

// 2|a n b| / (|a| + |b|); 1 when both masks are empty.
double dsc(const MaskVolume& a, const MaskVolume& b);

double trapezoid_auc(const std::vector<std::array<double, 2>>& points);

}  // namespace lodet
