#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "lodet/volume.hpp"

namespace lodet {

// --- VXG volume container ---------------------------------------------------
//
// Layout, fixed little-endian regardless of host:
//   bytes 0..3   magic "VXG1"
//   bytes 4..7   header_length, unsigned 32-bit LE
//   header       UTF-8 JSON: {dims:[3], spacing_mm, dtype:"f32"|"u8",
//                kind:"image"|"probability"|"mask", patient_id, timepoint_index}
//   body         raw voxels, x fastest; f32 for images/probabilities, u8 for masks

void write_vxg(const Volume& volume, const std::filesystem::path& path);
void write_vxg(const MaskVolume& mask, const std::filesystem::path& path);

using VxgContent = std::variant<Volume, MaskVolume>;
VxgContent read_vxg(const std::filesystem::path& path);

Volume read_vxg_volume(const std::filesystem::path& path);
MaskVolume read_vxg_mask(const std::filesystem::path& path);

// --- corpus manifest ----------------------------------------------------------

struct ManifestTimepoint {
    std::string image_path;  // relative to the manifest file
    std::string mask_path;
    bool has_prior = false;
};

struct ManifestPatient {
    std::string patient_id;
    std::vector<ManifestTimepoint> timepoints;
};

struct CorpusManifest {
    std::vector<ManifestPatient> patients;
    std::filesystem::path base_dir;  // set on load; used to resolve paths

    std::filesystem::path resolve(const std::string& rel) const { return base_dir / rel; }
};

CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

// Writes via a temp file in the same directory, then renames into place.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace lodet
