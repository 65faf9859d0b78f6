#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lodet/volume.hpp"

namespace lodet {

enum class ComponentTag { confirmed, candidate };
enum class ComponentSource { sens_only, spec_only, both };

struct AnnotatedComponent {
    int id = 0;                            // 1-based, matches the union labeling
    std::vector<std::int64_t> voxels;      // linear indices
    ComponentTag tag = ComponentTag::candidate;
    ComponentSource source = ComponentSource::sens_only;
};

struct AnnotatedMask {
    MaskVolume mask;  // voxelwise union of the two inputs
    std::vector<AnnotatedComponent> components;
};

// Voxelwise OR of the two model outputs; each connected component of the union
// is tagged `confirmed` iff it overlaps at least one voxel of the
// high-specificity mask, else `candidate` (needs review). The union keeps the
// high-sensitivity boundary inside confirmed components.
AnnotatedMask ensemble_union(const MaskVolume& mask_sens, const MaskVolume& mask_spec);

std::string component_tag_name(ComponentTag tag);
std::string component_source_name(ComponentSource source);

}  // namespace lodet
