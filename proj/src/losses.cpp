#include "lodet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lodet/errors.hpp"

namespace lodet {

namespace {

struct MaxResult {
    double value = 0.0;
    std::int64_t argmax = 0;  // first index attaining the max
};

MaxResult max_of(const std::vector<double>& values) {
    MaxResult r{values[0], 0};
    for (std::int64_t i = 1; i < static_cast<std::int64_t>(values.size()); ++i) {
        if (values[i] > r.value) {
            r.value = values[i];
            r.argmax = i;
        }
    }
    return r;
}

// max over voxels of pred * label. Since labels are binary this is the largest
// prediction inside the reference region (0 if the label is empty).
MaxResult max_product(const std::vector<std::uint8_t>& label, const std::vector<double>& pred) {
    MaxResult r{label[0] ? pred[0] : 0.0, 0};
    for (std::int64_t i = 1; i < static_cast<std::int64_t>(label.size()); ++i) {
        const double v = label[i] ? pred[i] : 0.0;
        if (v > r.value) {
            r.value = v;
            r.argmax = i;
        }
    }
    return r;
}

bool any_positive(const std::vector<std::uint8_t>& label) {
    for (auto v : label) {
        if (v) return true;
    }
    return false;
}

std::vector<std::vector<double>> zero_grad(const SubvolumeBatch& batch) {
    std::vector<std::vector<double>> g(batch.labels.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i].assign(batch.preds[i].size(), 0.0);
    return g;
}

}  // namespace

void SubvolumeBatch::validate() const {
    if (labels.empty()) throw ValidationError("SubvolumeBatch: batch size must be >= 1");
    if (labels.size() != preds.size()) {
        throw ValidationError("SubvolumeBatch: labels/preds batch size mismatch");
    }
    const auto n = static_cast<std::size_t>(voxel_count(shape));
    if (n == 0) throw ValidationError("SubvolumeBatch: shape must be non-empty");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].size() != n || preds[i].size() != n) {
            throw ValidationError("SubvolumeBatch: grid " + std::to_string(i) +
                                  " does not match shape");
        }
        for (auto v : labels[i]) {
            if (v > 1) throw ValidationError("SubvolumeBatch: non-binary label");
        }
        for (auto v : preds[i]) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ValidationError("SubvolumeBatch: prediction outside [0,1]");
            }
        }
    }
}

void VssParams::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("VssParams: alpha must be in [0,1]");
    if (!(epsilon > 0.0)) throw ValidationError("VssParams: epsilon must be positive");
}

double eta_sens(const SubvolumeBatch& batch, double epsilon) {
    batch.validate();
    double num = 0.0, den = epsilon;
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        num += max_product(batch.labels[i], batch.preds[i]).value;
        den += any_positive(batch.labels[i]) ? 1.0 : 0.0;
    }
    return num / den;
}

double eta_spec(const SubvolumeBatch& batch, double epsilon) {
    batch.validate();
    double num = 0.0, den = epsilon;
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        if (!any_positive(batch.labels[i])) {
            num += 1.0 - max_of(batch.preds[i]).value;
            den += 1.0;
        }
    }
    return num / den;
}

LossValue vss_loss(const SubvolumeBatch& batch, const VssParams& params) {
    batch.validate();
    params.validate();

    const int b = batch.batch_size();
    std::vector<MaxResult> prod_max(b), pred_max(b);
    std::vector<bool> positive(b);
    double sens_den = params.epsilon, spec_den = params.epsilon;
    double sens_num = 0.0, spec_num = 0.0;
    for (int i = 0; i < b; ++i) {
        prod_max[i] = max_product(batch.labels[i], batch.preds[i]);
        pred_max[i] = max_of(batch.preds[i]);
        positive[i] = any_positive(batch.labels[i]);
        sens_num += prod_max[i].value;
        if (positive[i]) {
            sens_den += 1.0;
        } else {
            spec_num += 1.0 - pred_max[i].value;
            spec_den += 1.0;
        }
    }
    const double e_sens = sens_num / sens_den;
    const double e_spec = spec_num / spec_den;

    LossValue out;
    // Distributed form of 1 - (alpha*eta_sens + (1-alpha)*eta_spec); this makes
    // the affine-in-alpha identity vss(a) = a*vss(1) + (1-a)*vss(0) hold to the
    // last bit, not just to rounding.
    out.total = params.alpha * (1.0 - e_sens) + (1.0 - params.alpha) * (1.0 - e_spec);
    out.components["eta_sens"] = e_sens;
    out.components["eta_spec"] = e_spec;
    out.grad = zero_grad(batch);
    for (int i = 0; i < b; ++i) {
        // d max(p*y) / d p at the argmax voxel is y there; the subgradient at
        // ties follows the first-index argmax convention.
        const auto v = prod_max[i].argmax;
        if (batch.labels[i][static_cast<std::size_t>(v)]) {
            out.grad[i][static_cast<std::size_t>(v)] -= params.alpha / sens_den;
        }
        if (!positive[i]) {
            out.grad[i][static_cast<std::size_t>(pred_max[i].argmax)] +=
                (1.0 - params.alpha) / spec_den;
        }
    }
    return out;
}

LossValue bce_loss(const SubvolumeBatch& batch) {
    batch.validate();
    const double n_total =
        static_cast<double>(batch.batch_size()) * static_cast<double>(batch.voxels_per_volume());
    LossValue out;
    out.grad = zero_grad(batch);
    double sum = 0.0;
    for (int i = 0; i < batch.batch_size(); ++i) {
        const auto& y = batch.labels[i];
        const auto& p = batch.preds[i];
        for (std::size_t v = 0; v < p.size(); ++v) {
            const double pc = std::clamp(p[v], kBceClamp, 1.0 - kBceClamp);
            sum -= y[v] ? std::log(pc) : std::log(1.0 - pc);
            if (p[v] >= kBceClamp && p[v] <= 1.0 - kBceClamp) {
                out.grad[i][v] = (-double(y[v]) / pc + (1.0 - y[v]) / (1.0 - pc)) / n_total;
            }
        }
    }
    out.total = sum / n_total;
    out.components["bce"] = out.total;
    return out;
}

LossValue jvss_loss(const SubvolumeBatch& batch, const VssParams& params) {
    LossValue vss = vss_loss(batch, params);
    LossValue bce = bce_loss(batch);
    LossValue out;
    out.total = vss.total + bce.total;
    out.components = vss.components;
    out.components["vss"] = vss.total;
    out.components["bce"] = bce.total;
    out.grad = std::move(vss.grad);
    for (std::size_t i = 0; i < out.grad.size(); ++i) {
        for (std::size_t v = 0; v < out.grad[i].size(); ++v) out.grad[i][v] += bce.grad[i][v];
    }
    return out;
}

LossValue sse_loss(const SubvolumeBatch& batch, double alpha) {
    batch.validate();
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("sse_loss: alpha must be in [0,1]");

    double pos_count = 0.0, neg_count = 0.0;
    double sens_sum = 0.0, spec_sum = 0.0;
    for (int i = 0; i < batch.batch_size(); ++i) {
        const auto& y = batch.labels[i];
        const auto& p = batch.preds[i];
        for (std::size_t v = 0; v < p.size(); ++v) {
            const double d2 = (y[v] - p[v]) * (y[v] - p[v]);
            if (y[v]) {
                sens_sum += d2;
                pos_count += 1.0;
            } else {
                spec_sum += d2;
                neg_count += 1.0;
            }
        }
    }
    // Zero-denominator terms contribute 0 (all-positive or all-negative batch).
    const double sens_term = pos_count > 0.0 ? sens_sum / pos_count : 0.0;
    const double spec_term = neg_count > 0.0 ? spec_sum / neg_count : 0.0;

    LossValue out;
    out.total = alpha * sens_term + (1.0 - alpha) * spec_term;
    out.components["sse_sens_term"] = sens_term;
    out.components["sse_spec_term"] = spec_term;
    out.grad = zero_grad(batch);
    for (int i = 0; i < batch.batch_size(); ++i) {
        const auto& y = batch.labels[i];
        const auto& p = batch.preds[i];
        for (std::size_t v = 0; v < p.size(); ++v) {
            if (y[v]) {
                if (pos_count > 0.0) out.grad[i][v] = -2.0 * alpha * (y[v] - p[v]) / pos_count;
            } else if (neg_count > 0.0) {
                out.grad[i][v] = -2.0 * (1.0 - alpha) * (0.0 - p[v]) / neg_count;
            }
        }
    }
    return out;
}

LossValue soft_dice_loss(const SubvolumeBatch& batch) {
    batch.validate();
    double inter = 0.0, pred_sum = 0.0, label_sum = 0.0;
    for (int i = 0; i < batch.batch_size(); ++i) {
        const auto& y = batch.labels[i];
        const auto& p = batch.preds[i];
        for (std::size_t v = 0; v < p.size(); ++v) {
            if (y[v]) inter += p[v];
            pred_sum += p[v];
            label_sum += y[v];
        }
    }
    const double numer = 2.0 * inter + kDiceSmoothing;
    const double denom = pred_sum + label_sum + kDiceSmoothing;
    LossValue out;
    out.total = 1.0 - numer / denom;
    out.components["dice"] = numer / denom;
    out.grad = zero_grad(batch);
    for (int i = 0; i < batch.batch_size(); ++i) {
        const auto& y = batch.labels[i];
        for (std::size_t v = 0; v < y.size(); ++v) {
            out.grad[i][v] = -(2.0 * y[v] * denom - numer) / (denom * denom);
        }
    }
    return out;
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::bce: return "bce";
        case LossKind::jvss: return "jvss";
        case LossKind::sse: return "sse";
        case LossKind::dice: return "dice";
    }
    throw InternalError("unknown LossKind");
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "bce") return LossKind::bce;
    if (name == "jvss") return LossKind::jvss;
    if (name == "sse") return LossKind::sse;
    if (name == "dice") return LossKind::dice;
    throw ValidationError("unknown loss name '" + name + "' (expected bce|jvss|sse|dice)");
}

LossValue evaluate_loss(LossKind kind, const SubvolumeBatch& batch, const VssParams& params) {
    switch (kind) {
        case LossKind::bce: return bce_loss(batch);
        case LossKind::jvss: return jvss_loss(batch, params);
        case LossKind::sse: return sse_loss(batch, params.alpha);
        case LossKind::dice: return soft_dice_loss(batch);
    }
    throw InternalError("unknown LossKind");
}

}  // namespace lodet
