#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "lodet/io_formats.hpp"
#include "lodet/rng.hpp"

#include "fixtures.hpp"

using namespace lodet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const auto dir = fs::temp_directory_path() / "lodet_io_test";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("vxg round trip is bit exact for f32 volumes") {
    const auto dir = temp_dir();
    Rng rng(1);
    Volume v = Volume::zeros({13, 9, 7}, 0.8, VolumeKind::image);
    for (auto& x : v.data) x = static_cast<float>(rng.normal());
    v.meta.patient_id = "p042";
    v.meta.timepoint_index = 1;
    write_vxg(v, dir / "vol.vxg");

    const Volume back = read_vxg_volume(dir / "vol.vxg");
    CHECK(back.dims == v.dims);
    CHECK(back.spacing_mm == v.spacing_mm);
    CHECK(back.kind == VolumeKind::image);
    CHECK(back.meta.patient_id == "p042");
    CHECK(back.meta.timepoint_index == 1);
    CHECK(back.data == v.data);  // bitwise
}

TEST_CASE("vxg round trip is bit exact for masks") {
    const auto dir = temp_dir();
    Rng rng(2);
    const auto m = fixtures::random_mask(rng, {8, 12, 10}, 0.4);
    write_vxg(m, dir / "mask.vxg");
    const MaskVolume back = read_vxg_mask(dir / "mask.vxg");
    CHECK(back.data == m.data);
    CHECK(back.dims == m.dims);
}

TEST_CASE("vxg read rejects corrupt files with distinct errors") {
    const auto dir = temp_dir();
    Volume v = Volume::zeros({4, 4, 4});
    write_vxg(v, dir / "ok.vxg");
    const std::string good = slurp(dir / "ok.vxg");

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        spit(dir / "bad.vxg", bad);
        CHECK_THROWS_WITH_AS(read_vxg(dir / "bad.vxg"), doctest::Contains("magic"),
                             ValidationError);
    }
    SUBCASE("truncated body") {
        spit(dir / "trunc.vxg", good.substr(0, good.size() - 7));
        CHECK_THROWS_WITH_AS(read_vxg(dir / "trunc.vxg"), doctest::Contains("truncated"),
                             ValidationError);
    }
    SUBCASE("dtype/kind mismatch") {
        // Rewrite the header of a valid file to claim a u8 image.
        std::string bad = good;
        const auto pos = bad.find("\"f32\"");
        REQUIRE(pos != std::string::npos);
        bad.replace(pos, 5, "\"u8\" ");
        spit(dir / "mismatch.vxg", bad);
        CHECK_THROWS_WITH_AS(read_vxg(dir / "mismatch.vxg"), doctest::Contains("dtype"),
                             ValidationError);
    }
    SUBCASE("mask with a non-binary voxel") {
        MaskVolume m = MaskVolume::zeros({4, 4, 4});
        write_vxg(m, dir / "m.vxg");
        std::string bad = slurp(dir / "m.vxg");
        bad[bad.size() - 1] = 2;
        spit(dir / "m2.vxg", bad);
        CHECK_THROWS_WITH_AS(read_vxg(dir / "m2.vxg"), doctest::Contains("non-binary"),
                             ValidationError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_vxg(dir / "nope.vxg"), ValidationError);
    }
    SUBCASE("probability volume outside [0,1] rejected on read") {
        Volume p = Volume::zeros({2, 2, 2}, 1.0, VolumeKind::probability);
        p.data[0] = 0.5f;
        write_vxg(p, dir / "p.vxg");
        std::string bad = slurp(dir / "p.vxg");
        const float big = 1.5f;
        std::memcpy(bad.data() + bad.size() - sizeof(float) * 8, &big, sizeof(float));
        spit(dir / "p2.vxg", bad);
        CHECK_THROWS_AS(read_vxg(dir / "p2.vxg"), ValidationError);
    }
}

TEST_CASE("manifest round trip and validation") {
    const auto dir = temp_dir() / "corpus";
    fs::create_directories(dir / "p000");
    Volume v = Volume::zeros({4, 4, 4});
    MaskVolume m = MaskVolume::zeros({4, 4, 4});
    write_vxg(v, dir / "p000/tp0_image.vxg");
    write_vxg(m, dir / "p000/tp0_mask.vxg");
    write_vxg(v, dir / "p000/tp1_image.vxg");
    write_vxg(m, dir / "p000/tp1_mask.vxg");

    CorpusManifest manifest;
    ManifestPatient p;
    p.patient_id = "p000";
    p.timepoints.push_back({"p000/tp0_image.vxg", "p000/tp0_mask.vxg", false});
    p.timepoints.push_back({"p000/tp1_image.vxg", "p000/tp1_mask.vxg", true});
    manifest.patients.push_back(p);
    save_manifest(manifest, dir / "manifest.json");

    const auto back = load_manifest(dir / "manifest.json");
    REQUIRE(back.patients.size() == 1);
    CHECK(back.patients[0].patient_id == "p000");
    CHECK(back.patients[0].timepoints.size() == 2);
    CHECK(back.patients[0].timepoints[1].has_prior);

    SUBCASE("missing referenced file") {
        CorpusManifest broken = manifest;
        broken.patients[0].timepoints[0].image_path = "p000/gone.vxg";
        save_manifest(broken, dir / "broken.json");
        CHECK_THROWS_WITH_AS(load_manifest(dir / "broken.json"), doctest::Contains("missing"),
                             ValidationError);
    }
    SUBCASE("has_prior inconsistent with order") {
        CorpusManifest broken = manifest;
        broken.patients[0].timepoints[0].has_prior = true;
        save_manifest(broken, dir / "broken2.json");
        CHECK_THROWS_WITH_AS(load_manifest(dir / "broken2.json"),
                             doctest::Contains("has_prior"), ValidationError);
    }
}
