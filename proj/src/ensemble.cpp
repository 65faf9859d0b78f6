#include "lodet/ensemble.hpp"

#include "lodet/errors.hpp"
#include "lodet/metrics.hpp"

namespace lodet {

AnnotatedMask ensemble_union(const MaskVolume& mask_sens, const MaskVolume& mask_spec) {
    mask_sens.validate();
    mask_spec.validate();
    if (!same_dims(mask_sens.dims, mask_spec.dims)) {
        throw ValidationError("ensemble_union: mask dims mismatch");
    }

    AnnotatedMask out;
    out.mask = MaskVolume::zeros(mask_sens.dims, mask_sens.spacing_mm);
    out.mask.meta = mask_sens.meta;
    for (std::size_t i = 0; i < out.mask.data.size(); ++i) {
        out.mask.data[i] = mask_sens.data[i] | mask_spec.data[i];
    }

    const LabeledComponents cc = connected_components(out.mask);
    out.components.reserve(static_cast<std::size_t>(cc.n_components));
    for (int c = 1; c <= cc.n_components; ++c) {
        AnnotatedComponent comp;
        comp.id = c;
        comp.voxels = cc.component_voxels[static_cast<std::size_t>(c - 1)];
        bool in_sens = false, in_spec = false;
        for (const std::int64_t v : comp.voxels) {
            in_sens = in_sens || mask_sens.data[static_cast<std::size_t>(v)];
            in_spec = in_spec || mask_spec.data[static_cast<std::size_t>(v)];
            if (in_sens && in_spec) break;
        }
        comp.tag = in_spec ? ComponentTag::confirmed : ComponentTag::candidate;
        comp.source = in_sens && in_spec ? ComponentSource::both
                      : in_spec          ? ComponentSource::spec_only
                                         : ComponentSource::sens_only;
        out.components.push_back(std::move(comp));
    }
    return out;
}

std::string component_tag_name(ComponentTag tag) {
    return tag == ComponentTag::confirmed ? "confirmed" : "candidate";
}

std::string component_source_name(ComponentSource source) {
    switch (source) {
        case ComponentSource::sens_only: return "sens";
        case ComponentSource::spec_only: return "spec";
        case ComponentSource::both: return "both";
    }
    throw InternalError("unknown ComponentSource");
}

}  // namespace lodet
