#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ablate/diff.hpp"
#include "ablate/phantom.hpp"

#include <nlohmann/json.hpp>

using namespace ablate;
namespace fs = std::filesystem;

namespace {

GridMeta smallGrid() {
    GridMeta g;
    g.dims = {16, 12, 6};
    g.spacing = {1.0, 1.0, 2.0};
    return g;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

struct TmpDir {
    fs::path path;
    explicit TmpDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("difference is exact voxelwise subtraction") {
    const GridMeta g = smallGrid();
    Volume post(g, Unit::HU), pre(g, Unit::HU);
    for (size_t i = 0; i < post.voxels.size(); ++i) {
        post.voxels[i] = float(-700 + 150 * phantomNoise(1, i, 0));
        pre.voxels[i] = float(-650 + 150 * phantomNoise(2, i, 0));
    }
    const DiffVolume d = difference(post, pre);
    for (size_t i = 0; i < d.voxels.size(); ++i)
        CHECK(d.voxels[i] == post.voxels[i] - pre.voxels[i]);
    CHECK(d.meta == g);

    // self-difference is identically zero
    const DiffVolume z = difference(post, post);
    for (const float v : z.voxels) CHECK(v == 0.0f);
}

TEST_CASE("difference requires matching grids") {
    const GridMeta g = smallGrid();
    GridMeta h = g;
    h.dims.x += 1;
    const Volume a = Volume::filled(g, Unit::HU, -500.f);
    const Volume b = Volume::filled(h, Unit::HU, -500.f);
    CHECK_THROWS_AS(difference(a, b), ValidationError);
}

TEST_CASE("hsv conversion hits the primary anchors") {
    std::uint8_t rgb[3];
    hsvToRgb(0.0, 1.0, 1.0, rgb); // pure red
    CHECK(rgb[0] == 255);
    CHECK(rgb[1] == 0);
    CHECK(rgb[2] == 0);
    hsvToRgb(120.0, 1.0, 1.0, rgb); // pure green
    CHECK(rgb[0] == 0);
    CHECK(rgb[1] == 255);
    CHECK(rgb[2] == 0);
    hsvToRgb(240.0, 1.0, 1.0, rgb); // pure blue
    CHECK(rgb[0] == 0);
    CHECK(rgb[1] == 0);
    CHECK(rgb[2] == 255);
    hsvToRgb(60.0, 1.0, 1.0, rgb); // yellow
    CHECK(rgb[0] == 255);
    CHECK(rgb[1] == 255);
    CHECK(rgb[2] == 0);
    hsvToRgb(123.0, 0.0, 0.5, rgb); // zero saturation = gray, hue irrelevant
    CHECK(rgb[0] == rgb[1]);
    CHECK(rgb[1] == rgb[2]);
    hsvToRgb(0.0, 0.0, 0.0, rgb); // black
    CHECK(rgb[0] == 0);
    hsvToRgb(360.0, 1.0, 1.0, rgb); // wraps to red
    CHECK(rgb[0] == 255);
    CHECK(rgb[1] == 0);
}

TEST_CASE("render config validation") {
    RenderConfig ok;
    CHECK_NOTHROW(ok.validate());
    RenderConfig bad = ok;
    bad.slice_axis = 3;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.slice_axis = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.diff_window = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.prefix = "";
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("rendering emits one png per mask-touching slice plus an index") {
    const GridMeta g = smallGrid();
    Volume fixed(g, Unit::HU);
    Volume diffv(g, Unit::HU);
    for (size_t i = 0; i < fixed.voxels.size(); ++i) {
        fixed.voxels[i] = float(-400 + 80 * phantomNoise(3, i, 1));
        diffv.voxels[i] = float(300 * phantomNoise(4, i, 2));
    }
    Mask tumor(g), treat(g);
    // tumor touches slices 1 and 2; treatment slices 2 and 3
    for (int j = 4; j < 7; ++j)
        for (int i = 5; i < 8; ++i) {
            tumor.at(i, j, 1) = tumor.at(i, j, 2) = 1;
            treat.at(i, j, 2) = treat.at(i, j, 3) = 1;
        }

    TmpDir tmp("ablate_diff_render_test");
    RenderConfig cfg;
    cfg.prefix = "unit";
    const RenderResult res = renderSlices(diffv, fixed, tumor, treat, cfg, tmp.path.string());

    REQUIRE(res.slices.size() == 3); // slices 1, 2, 3
    CHECK(res.slices[0].index == 1);
    CHECK(res.slices[1].index == 2);
    CHECK(res.slices[2].index == 3);
    for (const auto& s : res.slices) {
        CHECK(s.file == "unit_z_" + (s.index < 10 ? "00" + std::to_string(s.index)
                                                  : std::to_string(s.index)) +
                            ".png");
        const auto bytes = slurp(tmp.path / s.file);
        REQUIRE(bytes.size() > 8);
        // PNG signature
        CHECK(bytes[0] == 0x89);
        CHECK(bytes[1] == 'P');
        CHECK(bytes[2] == 'N');
        CHECK(bytes[3] == 'G');
    }

    // index json lists the same files
    const auto idx_bytes = slurp(res.index_json);
    const nlohmann::json idx = nlohmann::json::parse(idx_bytes.begin(), idx_bytes.end());
    REQUIRE(idx.contains("slices"));
    REQUIRE(idx["slices"].size() == 3);
    CHECK(idx["slices"][0]["file"] == res.slices[0].file);
    CHECK(idx["slices"][2]["index"] == 3);

    // all_slices renders the full stack
    RenderConfig all = cfg;
    all.all_slices = true;
    all.prefix = "unit_all";
    const RenderResult res_all = renderSlices(diffv, fixed, tumor, treat, all, tmp.path.string());
    CHECK(int(res_all.slices.size()) == g.dims.z);
}

TEST_CASE("rendering is deterministic byte for byte") {
    const GridMeta g = smallGrid();
    Volume fixed(g, Unit::HU), diffv(g, Unit::HU);
    for (size_t i = 0; i < fixed.voxels.size(); ++i) {
        fixed.voxels[i] = float(-300 + 60 * phantomNoise(5, i, 3));
        diffv.voxels[i] = float(250 * phantomNoise(6, i, 4));
    }
    Mask tumor(g), treat(g);
    tumor.at(8, 6, 2) = 1;
    treat.at(8, 6, 2) = 1;

    TmpDir a("ablate_diff_det_a"), b("ablate_diff_det_b");
    RenderConfig cfg;
    cfg.prefix = "det";
    const RenderResult ra = renderSlices(diffv, fixed, tumor, treat, cfg, a.path.string());
    const RenderResult rb = renderSlices(diffv, fixed, tumor, treat, cfg, b.path.string());
    REQUIRE(ra.slices.size() == rb.slices.size());
    for (size_t i = 0; i < ra.slices.size(); ++i)
        CHECK(slurp(a.path / ra.slices[i].file) == slurp(b.path / rb.slices[i].file));
}

TEST_CASE("sagittal axis renders x slices") {
    const GridMeta g = smallGrid();
    const Volume fixed = Volume::filled(g, Unit::HU, -200.f);
    const Volume diffv = Volume::filled(g, Unit::HU, 0.f);
    Mask tumor(g), treat(g);
    tumor.at(5, 4, 3) = 1;
    treat.at(6, 4, 3) = 1;

    TmpDir tmp("ablate_diff_axis_test");
    RenderConfig cfg;
    cfg.slice_axis = 0;
    cfg.prefix = "sag";
    const RenderResult res = renderSlices(diffv, fixed, tumor, treat, cfg, tmp.path.string());
    REQUIRE(res.slices.size() == 2);
    CHECK(res.slices[0].index == 5);
    CHECK(res.slices[0].file == "sag_x_005.png");
    CHECK(res.slices[1].index == 6);
}
