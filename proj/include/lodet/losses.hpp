#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lodet/volume.hpp"

namespace lodet {

// A batch of paired label/prediction subvolumes: labels are binary, predictions
// are probabilities. All grids share one shape.
struct SubvolumeBatch {
    Dims shape{0, 0, 0};
    std::vector<std::vector<std::uint8_t>> labels;  // B x voxels
    std::vector<std::vector<double>> preds;         // B x voxels, in [0,1]

    int batch_size() const { return static_cast<int>(labels.size()); }
    std::int64_t voxels_per_volume() const { return voxel_count(shape); }
    void validate() const;
};

struct VssParams {
    double alpha = 0.5;     // sensitivity weight; 1 = pure sensitivity
    double epsilon = 1e-5;  // denominator guard

    void validate() const;
};

// Scalar loss plus named sub-terms and the analytic gradient w.r.t. the
// predictions (same layout as SubvolumeBatch::preds).
struct LossValue {
    double total = 0.0;
    std::map<std::string, double> components;
    std::vector<std::vector<double>> grad;
};

// Subvolume-level detection sensitivity surrogate:
//   sum_i max(pred_i * label_i) / (sum_i max(label_i) + eps).
// The product max (not max * max) enforces overlap with the reference mask.
double eta_sens(const SubvolumeBatch& batch, double epsilon);

// Subvolume-level specificity surrogate:
//   sum_i (1 - max(label_i)) * (1 - max(pred_i)) / (sum_i (1 - max(label_i)) + eps).
double eta_spec(const SubvolumeBatch& batch, double epsilon);

// 1 - (alpha * eta_sens + (1 - alpha) * eta_spec). Components carry both etas.
LossValue vss_loss(const SubvolumeBatch& batch, const VssParams& params);

// Voxel-mean binary cross-entropy; predictions clamped to [delta, 1-delta].
LossValue bce_loss(const SubvolumeBatch& batch);

// Joint loss: vss + bce.
LossValue jvss_loss(const SubvolumeBatch& batch, const VssParams& params);

// Voxel-level sensitivity-specificity error (the prior formulation used as a
// comparison baseline):
//   alpha * sum((y - p)^2 y) / sum(y) + (1 - alpha) * sum((y - p)^2 (1 - y)) / sum(1 - y),
// summed over every voxel of the batch; a term with zero denominator contributes 0.
LossValue sse_loss(const SubvolumeBatch& batch, double alpha);

// 1 - (2 sum(p y) + s) / (sum(p) + sum(y) + s), batch-global sums, s = 1.
LossValue soft_dice_loss(const SubvolumeBatch& batch);

constexpr double kBceClamp = 1e-7;
constexpr double kDiceSmoothing = 1.0;

enum class LossKind { bce, jvss, sse, dice };

std::string loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);

// Dispatcher used by the trainer; alpha/epsilon are read from params where the
// loss uses them.
LossValue evaluate_loss(LossKind kind, const SubvolumeBatch& batch, const VssParams& params);

}  // namespace lodet
