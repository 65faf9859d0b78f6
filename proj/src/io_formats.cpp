#include "lodet/io_formats.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace lodet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'V', 'X', 'G', '1'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big,
              "mixed-endian hosts unsupported");

void append_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_f32_le(std::string& out, const float* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        out.append(reinterpret_cast<const char*>(data), n * sizeof(float));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, &data[i], 4);
            append_u32_le(out, bits);
        }
    }
}

std::string kind_to_string(VolumeKind k) {
    return k == VolumeKind::image ? "image" : "probability";
}

json make_header(const Dims& dims, double spacing, const std::string& dtype,
                 const std::string& kind, const VolumeMeta& meta) {
    return json{{"dims", {dims[0], dims[1], dims[2]}},
                {"spacing_mm", spacing},
                {"dtype", dtype},
                {"kind", kind},
                {"patient_id", meta.patient_id},
                {"timepoint_index", meta.timepoint_index}};
}

void write_vxg_bytes(const json& header, const std::string& body, const fs::path& path) {
    std::string out;
    const std::string header_str = header.dump();
    out.reserve(8 + header_str.size() + body.size());
    out.append(kMagic, 4);
    append_u32_le(out, static_cast<std::uint32_t>(header_str.size()));
    out += header_str;
    out += body;
    atomic_write_file(path, out);
}

struct ParsedHeader {
    Dims dims;
    double spacing_mm;
    std::string dtype;
    std::string kind;
    VolumeMeta meta;
    std::size_t body_offset;
};

ParsedHeader parse_header(const std::string& bytes, const fs::path& path) {
    const std::string name = path.string();
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw ValidationError("bad VXG magic in " + name);
    }
    const std::uint32_t header_len =
        read_u32_le(reinterpret_cast<const unsigned char*>(bytes.data()) + 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
        throw ValidationError("truncated VXG header in " + name);
    }
    json header;
    try {
        header = json::parse(bytes.substr(8, header_len));
    } catch (const json::exception& e) {
        throw ValidationError("unparseable VXG header in " + name + ": " + e.what());
    }
    ParsedHeader out;
    try {
        const auto& d = header.at("dims");
        out.dims = {d.at(0).get<int>(), d.at(1).get<int>(), d.at(2).get<int>()};
        out.spacing_mm = header.at("spacing_mm").get<double>();
        out.dtype = header.at("dtype").get<std::string>();
        out.kind = header.at("kind").get<std::string>();
        out.meta.patient_id = header.value("patient_id", std::string{});
        out.meta.timepoint_index = header.value("timepoint_index", 0);
    } catch (const json::exception& e) {
        throw ValidationError("incomplete VXG header in " + name + ": " + e.what());
    }
    out.body_offset = 8 + header_len;
    return out;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

}  // namespace

void atomic_write_file(const fs::path& path, const std::string& bytes) {
    fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ValidationError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_vxg(const Volume& volume, const fs::path& path) {
    volume.validate();
    std::string body;
    append_f32_le(body, volume.data.data(), volume.data.size());
    write_vxg_bytes(make_header(volume.dims, volume.spacing_mm, "f32",
                                kind_to_string(volume.kind), volume.meta),
                    body, path);
}

void write_vxg(const MaskVolume& mask, const fs::path& path) {
    mask.validate();
    std::string body(reinterpret_cast<const char*>(mask.data.data()), mask.data.size());
    write_vxg_bytes(make_header(mask.dims, mask.spacing_mm, "u8", "mask", mask.meta), body, path);
}

VxgContent read_vxg(const fs::path& path) {
    const std::string bytes = slurp(path);
    const ParsedHeader h = parse_header(bytes, path);
    const auto n = static_cast<std::size_t>(voxel_count(h.dims));

    const bool is_mask_kind = h.kind == "mask";
    const bool is_scalar_kind = h.kind == "image" || h.kind == "probability";
    if (!is_mask_kind && !is_scalar_kind) {
        throw ValidationError("unknown VXG kind '" + h.kind + "' in " + path.string());
    }
    if ((is_mask_kind && h.dtype != "u8") || (is_scalar_kind && h.dtype != "f32")) {
        throw ValidationError("VXG dtype '" + h.dtype + "' inconsistent with kind '" + h.kind +
                              "' in " + path.string());
    }

    if (is_mask_kind) {
        if (bytes.size() - h.body_offset != n) {
            throw ValidationError("truncated VXG body in " + path.string());
        }
        MaskVolume m;
        m.dims = h.dims;
        m.spacing_mm = h.spacing_mm;
        m.meta = h.meta;
        m.data.assign(reinterpret_cast<const std::uint8_t*>(bytes.data() + h.body_offset),
                      reinterpret_cast<const std::uint8_t*>(bytes.data() + h.body_offset) + n);
        m.validate();
        return m;
    }

    if (bytes.size() - h.body_offset != n * sizeof(float)) {
        throw ValidationError("truncated VXG body in " + path.string());
    }
    Volume v;
    v.dims = h.dims;
    v.spacing_mm = h.spacing_mm;
    v.kind = h.kind == "image" ? VolumeKind::image : VolumeKind::probability;
    v.meta = h.meta;
    v.data.resize(n);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(v.data.data(), bytes.data() + h.body_offset, n * sizeof(float));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const auto* p =
                reinterpret_cast<const unsigned char*>(bytes.data() + h.body_offset + 4 * i);
            const std::uint32_t bits = read_u32_le(p);
            std::memcpy(&v.data[i], &bits, 4);
        }
    }
    v.validate();
    return v;
}

Volume read_vxg_volume(const fs::path& path) {
    VxgContent c = read_vxg(path);
    if (auto* v = std::get_if<Volume>(&c)) return std::move(*v);
    throw ValidationError("expected image/probability VXG, got mask: " + path.string());
}

MaskVolume read_vxg_mask(const fs::path& path) {
    VxgContent c = read_vxg(path);
    if (auto* m = std::get_if<MaskVolume>(&c)) return std::move(*m);
    throw ValidationError("expected mask VXG, got image/probability: " + path.string());
}

CorpusManifest load_manifest(const fs::path& path) {
    json j;
    try {
        j = json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw ValidationError("unparseable manifest " + path.string() + ": " + e.what());
    }
    CorpusManifest m;
    m.base_dir = path.parent_path();
    try {
        for (const auto& pj : j.at("patients")) {
            ManifestPatient p;
            p.patient_id = pj.at("patient_id").get<std::string>();
            for (const auto& tj : pj.at("timepoints")) {
                ManifestTimepoint t;
                t.image_path = tj.at("image_path").get<std::string>();
                t.mask_path = tj.at("mask_path").get<std::string>();
                t.has_prior = tj.at("has_prior").get<bool>();
                p.timepoints.push_back(std::move(t));
            }
            m.patients.push_back(std::move(p));
        }
    } catch (const json::exception& e) {
        throw ValidationError("malformed manifest " + path.string() + ": " + e.what());
    }
    for (const auto& p : m.patients) {
        for (std::size_t t = 0; t < p.timepoints.size(); ++t) {
            const auto& tp = p.timepoints[t];
            if (tp.has_prior != (t > 0)) {
                throw ValidationError("manifest patient " + p.patient_id +
                                      ": has_prior inconsistent with timepoint order");
            }
            for (const auto& rel : {tp.image_path, tp.mask_path}) {
                if (!fs::exists(m.resolve(rel))) {
                    throw ValidationError("manifest references missing file " +
                                          m.resolve(rel).string());
                }
            }
        }
    }
    return m;
}

void save_manifest(const CorpusManifest& manifest, const fs::path& path) {
    json patients = json::array();
    for (const auto& p : manifest.patients) {
        json tps = json::array();
        for (const auto& t : p.timepoints) {
            tps.push_back({{"image_path", t.image_path},
                           {"mask_path", t.mask_path},
                           {"has_prior", t.has_prior}});
        }
        patients.push_back({{"patient_id", p.patient_id}, {"timepoints", std::move(tps)}});
    }
    atomic_write_file(path, json{{"patients", std::move(patients)}}.dump(2) + "\n");
}

}  // namespace lodet
