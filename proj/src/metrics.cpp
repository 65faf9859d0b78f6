#include "lodet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "lodet/errors.hpp"

namespace lodet {

namespace {

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!same_dims(a, b)) throw ValidationError(std::string(what) + ": dims mismatch");
}

}  // namespace

MaskVolume binarize(const Volume& prob, double threshold) {
    prob.validate();
    if (prob.kind != VolumeKind::probability) {
        throw ValidationError("binarize: expected a probability volume");
    }
    MaskVolume out = MaskVolume::zeros(prob.dims, prob.spacing_mm);
    out.meta = prob.meta;
    for (std::size_t i = 0; i < prob.data.size(); ++i) {
        out.data[i] = prob.data[i] >= threshold ? 1 : 0;
    }
    return out;
}

LabeledComponents connected_components(const MaskVolume& mask, Connectivity connectivity) {
    mask.validate();
    const Dims d = mask.dims;

    // Neighbor offsets for the requested connectivity.
    std::vector<std::array<int, 3>> offsets;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0 && dz == 0) continue;
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (connectivity == Connectivity::six && manhattan != 1) continue;
                offsets.push_back({dx, dy, dz});
            }
        }
    }

    LabeledComponents out;
    out.dims = d;
    out.connectivity = connectivity;
    out.labels.assign(mask.data.size(), 0);

    // Iterative BFS flood fill over unlabeled foreground voxels.
    std::vector<std::int64_t> stack;
    for (int z = 0; z < d[2]; ++z) {
        for (int y = 0; y < d[1]; ++y) {
            for (int x = 0; x < d[0]; ++x) {
                const std::int64_t idx = linear_index(d, x, y, z);
                if (!mask.data[idx] || out.labels[idx] != 0) continue;
                const int label = ++out.n_components;
                out.component_voxels.emplace_back();
                auto& voxels = out.component_voxels.back();
                stack.clear();
                stack.push_back(idx);
                out.labels[idx] = label;
                while (!stack.empty()) {
                    const std::int64_t cur = stack.back();
                    stack.pop_back();
                    voxels.push_back(cur);
                    const int cx = static_cast<int>(cur % d[0]);
                    const int cy = static_cast<int>((cur / d[0]) % d[1]);
                    const int cz = static_cast<int>(cur / (static_cast<std::int64_t>(d[0]) * d[1]));
                    for (const auto& off : offsets) {
                        const int nx = cx + off[0], ny = cy + off[1], nz = cz + off[2];
                        if (nx < 0 || ny < 0 || nz < 0 || nx >= d[0] || ny >= d[1] || nz >= d[2]) {
                            continue;
                        }
                        const std::int64_t nidx = linear_index(d, nx, ny, nz);
                        if (mask.data[nidx] && out.labels[nidx] == 0) {
                            out.labels[nidx] = label;
                            stack.push_back(nidx);
                        }
                    }
                }
                std::sort(voxels.begin(), voxels.end());
            }
        }
    }
    out.component_sizes.reserve(out.component_voxels.size());
    for (const auto& v : out.component_voxels) {
        out.component_sizes.push_back(static_cast<std::int64_t>(v.size()));
    }
    return out;
}

SubvolumeMetrics subvolume_metrics(const MaskVolume& pred, const MaskVolume& ref, int tile_size) {
    pred.validate();
    ref.validate();
    require_same_dims(pred.dims, ref.dims, "subvolume_metrics");
    if (tile_size < 1) throw ValidationError("subvolume_metrics: tile_size must be >= 1");
    const Dims d = pred.dims;
    if (tile_size > d[0] || tile_size > d[1] || tile_size > d[2]) {
        throw ValidationError("subvolume_metrics: tile_size exceeds volume dims");
    }

    SubvolumeMetrics m;
    for (int z0 = 0; z0 < d[2]; z0 += tile_size) {
        for (int y0 = 0; y0 < d[1]; y0 += tile_size) {
            for (int x0 = 0; x0 < d[0]; x0 += tile_size) {
                bool pred_pos = false, ref_pos = false;
                const int z1 = std::min(z0 + tile_size, d[2]);
                const int y1 = std::min(y0 + tile_size, d[1]);
                const int x1 = std::min(x0 + tile_size, d[0]);
                for (int z = z0; z < z1 && !(pred_pos && ref_pos); ++z) {
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) {
                            const std::int64_t idx = linear_index(d, x, y, z);
                            pred_pos = pred_pos || pred.data[idx];
                            ref_pos = ref_pos || ref.data[idx];
                        }
                    }
                }
                if (ref_pos && pred_pos) ++m.tp;
                else if (ref_pos && !pred_pos) ++m.fn;
                else if (!ref_pos && pred_pos) ++m.fp;
                else ++m.tn;
            }
        }
    }
    m.sensitivity = (m.tp + m.fn) > 0 ? double(m.tp) / double(m.tp + m.fn) : 1.0;
    m.specificity = (m.tn + m.fp) > 0 ? double(m.tn) / double(m.tn + m.fp) : 1.0;
    if (m.tp + m.fp > 0) {
        m.precision = double(m.tp) / double(m.tp + m.fp);
    } else {
        m.precision = 1.0;
        m.precision_degenerate = true;
    }
    return m;
}

LesionMatchReport lesion_match(const MaskVolume& pred, const MaskVolume& ref) {
    pred.validate();
    ref.validate();
    require_same_dims(pred.dims, ref.dims, "lesion_match");

    const LabeledComponents ref_cc = connected_components(ref);
    const LabeledComponents pred_cc = connected_components(pred);

    LesionMatchReport r;
    r.n_ref_lesions = ref_cc.n_components;
    r.n_pred_components = pred_cc.n_components;

    std::vector<bool> pred_hits_ref(pred_cc.n_components, false);
    for (int rc = 1; rc <= ref_cc.n_components; ++rc) {
        // Predicted components overlapping this reference lesion.
        std::unordered_set<int> overlapping;
        std::int64_t overlap_voxels = 0;
        for (const std::int64_t v : ref_cc.component_voxels[rc - 1]) {
            const int pc = pred_cc.labels[v];
            if (pc != 0) {
                overlapping.insert(pc);
                ++overlap_voxels;
            }
        }
        if (overlapping.empty()) {
            r.fn_lesions.push_back(rc);
            continue;
        }
        r.tp_lesions.push_back(rc);
        for (int pc : overlapping) pred_hits_ref[pc - 1] = true;
        // DSC between this lesion and the union of the predicted components
        // that touch it.
        std::int64_t union_size = 0;
        for (int pc : overlapping) union_size += pred_cc.component_sizes[pc - 1];
        const std::int64_t ref_size = ref_cc.component_sizes[rc - 1];
        r.tp_dsc.push_back(2.0 * double(overlap_voxels) / double(ref_size + union_size));
    }
    for (int pc = 1; pc <= pred_cc.n_components; ++pc) {
        if (!pred_hits_ref[pc - 1]) r.fp_components.push_back(pc);
    }
    r.fp_count = static_cast<int>(r.fp_components.size());

    const int tp_ref = static_cast<int>(r.tp_lesions.size());
    if (r.n_ref_lesions > 0) {
        r.sensitivity = double(tp_ref) / double(r.n_ref_lesions);
    } else {
        r.sensitivity = 1.0;
        r.sensitivity_degenerate = true;
    }
    const int tp_pred = r.n_pred_components - r.fp_count;
    if (r.n_pred_components > 0) {
        r.precision = double(tp_pred) / double(r.n_pred_components);
    } else {
        r.precision = 1.0;
        r.precision_degenerate = true;
    }
    if (!r.tp_dsc.empty()) {
        r.mdsc = std::accumulate(r.tp_dsc.begin(), r.tp_dsc.end(), 0.0) /
                 static_cast<double>(r.tp_dsc.size());
    }
    return r;
}

double trapezoid_auc(const std::vector<std::array<double, 2>>& points) {
    double auc = 0.0;
    for (std::size_t k = 0; k + 1 < points.size(); ++k) {
        auc += (points[k + 1][0] - points[k][0]) * (points[k][1] + points[k + 1][1]) * 0.5;
    }
    return auc;
}

CurvePoints roc_points_aggregate(const std::vector<const Volume*>& probs,
                                 const std::vector<const MaskVolume*>& refs, int tile_size,
                                 const std::vector<double>& thresholds) {
    if (probs.empty() || probs.size() != refs.size()) {
        throw ValidationError("roc_points: need matching prob/ref volumes");
    }
    if (thresholds.size() < 2) throw ValidationError("roc_points: need at least 2 thresholds");
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i) {
        if (thresholds[i] < thresholds[i + 1]) {
            throw ValidationError("roc_points: thresholds must be sorted descending");
        }
    }
    if (thresholds.front() != 1.0 || thresholds.back() != 0.0) {
        throw ValidationError("roc_points: thresholds must include 1 and 0");
    }
    CurvePoints out;
    out.points.reserve(thresholds.size());
    for (const double t : thresholds) {
        std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
        for (std::size_t v = 0; v < probs.size(); ++v) {
            const SubvolumeMetrics m =
                subvolume_metrics(binarize(*probs[v], t), *refs[v], tile_size);
            tp += m.tp;
            tn += m.tn;
            fp += m.fp;
            fn += m.fn;
        }
        const double sens = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 1.0;
        const double spec = (tn + fp) > 0 ? double(tn) / double(tn + fp) : 1.0;
        out.points.push_back({1.0 - spec, sens});
    }
    out.auc = trapezoid_auc(out.points);
    return out;
}

CurvePoints roc_points(const Volume& prob, const MaskVolume& ref, int tile_size,
                       const std::vector<double>& thresholds) {
    return roc_points_aggregate({&prob}, {&ref}, tile_size, thresholds);
}

CurvePoints pr_points(const std::vector<std::array<double, 2>>& sensitivity_precision) {
    if (sensitivity_precision.size() < 2) {
        throw ValidationError("pr_points: need at least 2 (sensitivity, precision) points");
    }
    CurvePoints out;
    out.points = sensitivity_precision;
    std::sort(out.points.begin(), out.points.end(),
              [](const auto& a, const auto& b) { return a[0] < b[0]; });
    out.auc = trapezoid_auc(out.points);
    return out;
}

double dsc(const MaskVolume& a, const MaskVolume& b) {
    a.validate();
    b.validate();
    require_same_dims(a.dims, b.dims, "dsc");
    std::int64_t inter = 0, size_a = 0, size_b = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        inter += a.data[i] & b.data[i];
        size_a += a.data[i];
        size_b += b.data[i];
    }
    if (size_a + size_b == 0) return 1.0;
    return 2.0 * double(inter) / double(size_a + size_b);
}

}  // namespace lodet
