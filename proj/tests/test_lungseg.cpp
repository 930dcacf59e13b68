#include "doctest.h"

#include <filesystem>

#include "ablate/io.hpp"
#include "ablate/lungseg.hpp"
#include "ablate/metrics.hpp"
#include "ablate/phantom.hpp"

using namespace ablate;

TEST_CASE("connected components labels disjoint blobs") {
    GridMeta g;
    g.dims = {10, 5, 5};
    g.spacing = {1, 1, 1};
    Mask m(g);
    for (int k = 1; k < 4; ++k)
        for (int j = 1; j < 4; ++j) {
            m.at(1, j, k) = 1; // blob A
            m.at(8, j, k) = 1; // blob B
        }
    int n = 0;
    const std::vector<int> labels = connectedComponents(m, n);
    CHECK(n == 2);
    CHECK(labels[size_t(g.index(1, 2, 2))] != 0);
    CHECK(labels[size_t(g.index(8, 2, 2))] != 0);
    CHECK(labels[size_t(g.index(1, 2, 2))] != labels[size_t(g.index(8, 2, 2))]);
    CHECK(labels[size_t(g.index(5, 2, 2))] == 0); // background

    // diagonal voxels are not 6-connected
    Mask d(g);
    d.at(0, 0, 0) = 1;
    d.at(1, 1, 0) = 1;
    connectedComponents(d, n);
    CHECK(n == 2);
}

TEST_CASE("segmentation keeps interior air and drops exterior air") {
    GridMeta g;
    g.dims = {40, 40, 40};
    g.spacing = {2, 2, 2};
    Volume v = Volume::filled(g, Unit::HU, 0.0f); // soft tissue everywhere
    // exterior air slab touching the volume boundary
    for (int j = 0; j < 40; ++j)
        for (int i = 0; i < 40; ++i) v.at(i, j, 0) = -1000.0f;
    // interior air pocket, 20^3 voxels = 128000 mm^3 (above the size floor)
    for (int k = 10; k < 30; ++k)
        for (int j = 10; j < 30; ++j)
            for (int i = 10; i < 30; ++i) v.at(i, j, k) = -800.0f;

    const Mask lung = segmentLung(v);
    CHECK(lung.at(20, 20, 20) == 1);
    CHECK(lung.at(20, 20, 0) == 0);  // boundary-touching air removed
    CHECK(lung.at(5, 5, 20) == 0);   // tissue stays out
    // nothing but the pocket (possibly slightly closed) should be present
    CHECK(lung.count() >= 20 * 20 * 20);
    CHECK(lung.count() <= 24 * 24 * 24);
}

TEST_CASE("segmentation throws when no lung-sized air pocket exists") {
    GridMeta g;
    g.dims = {16, 16, 16};
    g.spacing = {1, 1, 1};
    const Volume v = Volume::filled(g, Unit::HU, 50.0f);
    CHECK_THROWS_AS(segmentLung(v), ValidationError);
}

TEST_CASE("segmentation recovers the phantom lungs") {
    PhantomConfig pc;
    pc.seed = 3;
    pc.dims = {64, 64, 64};
    pc.spacing = {1.6, 1.6, 1.6}; // keep the whole body inside the grid
    pc.smooth_passes = 1;
    const Phantom ph = makePhantom(pc);
    const Mask seg = segmentLung(ph.volume);
    CHECK(dice(seg, ph.lung) > 0.9);
}

TEST_CASE("config validation rejects nonsense") {
    LungSegConfig c;
    c.min_component_mm3 = -1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = LungSegConfig{};
    c.closing_radius_mm = -2.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("applyLungMask replaces everything outside the mask") {
    GridMeta g;
    g.dims = {4, 4, 4};
    g.spacing = {1, 1, 1};
    const Volume v = Volume::filled(g, Unit::HU, 100.0f);
    Mask m(g);
    m.at(1, 1, 1) = 1;
    const Volume out = applyLungMask(v, m, -1000.0f);
    CHECK(out.at(1, 1, 1) == 100.0f);
    CHECK(out.at(0, 0, 0) == -1000.0f);
}

TEST_CASE("ingestMask returns same-grid masks untouched and resamples others") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "ablate_lungseg_tests";
    fs::create_directories(dir);

    GridMeta g;
    g.dims = {8, 8, 8};
    g.spacing = {1, 1, 1};
    Mask m(g);
    for (int k = 2; k < 6; ++k)
        for (int j = 2; j < 6; ++j)
            for (int i = 2; i < 6; ++i) m.at(i, j, k) = 1;
    const std::string path = (dir / "m.nii.gz").string();
    saveMask(m, path);

    const Mask same = ingestMask(path, g);
    CHECK(same.voxels == m.voxels);

    GridMeta half = g;
    half.dims = {4, 4, 4};
    half.spacing = {2, 2, 2};
    const Mask coarse = ingestMask(path, half);
    CHECK(coarse.meta.dims == Vec3i{4, 4, 4});
    CHECK(coarse.count() > 0);
    CHECK(coarse.count() < coarse.meta.voxelCount());
}
