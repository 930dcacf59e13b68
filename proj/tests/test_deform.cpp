#include "doctest.h"

#include <cmath>
#include <cstring>

#include "ablate/deform.hpp"
#include "ablate/phantom.hpp"

using namespace ablate;

namespace {

Volume texture(const GridMeta& g, std::uint64_t seed) {
    Volume v(g, Unit::Normalized);
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i) {
                const std::int64_t idx = g.index(i, j, k);
                v.voxels[size_t(idx)] =
                    float(std::sin(0.45 * i + 0.1 * k) * std::cos(0.38 * j) +
                          0.15 * phantomNoise(seed, std::uint64_t(idx), 4));
            }
    return v;
}

} // namespace

TEST_CASE("control grid spans the volume with ceil(dim/spacing) nodes, centered") {
    const ControlGrid g = ControlGrid::make({28, 8, 8}, 8, 2);
    CHECK(g.nodes == Vec3i{4, 1, 1});
    CHECK(g.spacing == 8);
    CHECK(g.level == 2);
    // centered: leftover margin split evenly
    const int span_x = (g.nodes.x - 1) * g.spacing;
    CHECK(g.start.x == (28 - 1 - span_x) / 2);
    CHECK(g.start.y == (8 - 1) / 2);
    // every node voxel lies inside the grid
    for (int a = 0; a < g.nodes.x; ++a) {
        const Vec3i nv = g.nodeVoxel(a, 0, 0);
        CHECK(nv.x >= 0);
        CHECK(nv.x < 28);
    }

    const ControlGrid h = ControlGrid::make({64, 64, 64}, 8, 0);
    CHECK(h.nodes == Vec3i{8, 8, 8});
    // index/abc round trip
    for (std::int64_t i = 0; i < h.count(); ++i) {
        const Vec3i abc = h.abc(i);
        CHECK(h.index(abc.x, abc.y, abc.z) == i);
    }
}

TEST_CASE("label space enumerates the signed cube and round trips") {
    const LabelSpace ls{2, 3}; // l_max=2, q=3
    CHECK(ls.perAxis() == 5);
    CHECK(ls.count() == 125);
    CHECK(ls.axisDisp(0) == -6);
    CHECK(ls.axisDisp(2) == 0);
    CHECK(ls.axisDisp(4) == 6);
    for (std::int64_t l = 0; l < ls.count(); ++l) {
        const Vec3i d = ls.disp(l);
        CHECK(d.x % 3 == 0);
        CHECK(std::abs(d.x) <= 6);
        const std::int64_t back =
            ls.index(d.x / 3 + ls.l_max, d.y / 3 + ls.l_max, d.z / 3 + ls.l_max);
        CHECK(back == l);
    }
}

TEST_CASE("regularization cost is squared displacement difference over node distance") {
    const Vec3 up{1, 2, 2}, uq{0, 0, 0};
    const Vec3 xp{0, 0, 0}, xq{4, 0, 3}; // distance 5
    CHECK(regCost(up, uq, xp, xq) == doctest::Approx(9.0 / 5.0).epsilon(1e-12));
    CHECK(regCost(up, up, xp, xq) == doctest::Approx(0.0));
}

TEST_CASE("data cost is zero at zero displacement for identical volumes") {
    GridMeta g;
    g.dims = {16, 14, 12};
    g.spacing = {1, 1, 1};
    const Volume v = texture(g, 5);
    const SscVolume d = computeSsc(v, 1);
    DataCostContext ctx;
    ctx.desc_fixed = &d;
    ctx.desc_moving = &d;
    CHECK(dataCost(ctx, {8, 7, 6}, {0, 0, 0}) == doctest::Approx(0.0));
    // nonzero displacement on a textured volume costs something
    CHECK(dataCost(ctx, {8, 7, 6}, {3, 0, 0}) > 0.0);
    // cost is never negative
    CHECK(dataCost(ctx, {1, 1, 1}, {-4, 2, 0}) >= 0.0);
}

TEST_CASE("fully excluded moving patches take the worst-case cost") {
    GridMeta g;
    g.dims = {12, 12, 12};
    g.spacing = {1, 1, 1};
    const Volume v = texture(g, 6);
    const SscVolume d = computeSsc(v, 1);
    Mask all(g);
    std::fill(all.voxels.begin(), all.voxels.end(), std::uint8_t(1));
    DataCostContext ctx;
    ctx.desc_fixed = &d;
    ctx.desc_moving = &d;
    ctx.exclude_moving = &all;
    const double worst = dataCost(ctx, {6, 6, 6}, {0, 0, 0});
    CHECK(worst > 0.0); // masked regions never look attractive
    DataCostContext open = ctx;
    open.exclude_moving = nullptr;
    CHECK(worst > dataCost(open, {6, 6, 6}, {2, 0, 0}));
}

TEST_CASE("data cost table matches the direct call bitwise") {
    GridMeta g;
    g.dims = {18, 16, 14};
    g.spacing = {1.2, 1.0, 1.4};
    const Volume fixed = texture(g, 7);
    const Volume moving = texture(g, 8);
    const SscVolume df = computeSsc(fixed, 1);
    const SscVolume dm = computeSsc(moving, 1);
    Mask excl(g);
    for (int k = 5; k < 9; ++k)
        for (int j = 5; j < 9; ++j)
            for (int i = 5; i < 9; ++i) excl.at(i, j, k) = 1;

    DataCostContext ctx;
    ctx.desc_fixed = &df;
    ctx.desc_moving = &dm;
    ctx.exclude_moving = &excl;
    ctx.sample_stride = 2;

    const ControlGrid grid = ControlGrid::make(g.dims, 6, 0);
    const LabelSpace labels{1, 2};
    const std::vector<double> table = dataCostTable(ctx, grid, labels);
    REQUIRE(std::int64_t(table.size()) == grid.count() * labels.count());
    for (std::int64_t n = 0; n < grid.count(); ++n) {
        const Vec3i abc = grid.abc(n);
        const Vec3i nv = grid.nodeVoxel(abc.x, abc.y, abc.z);
        for (std::int64_t l = 0; l < labels.count(); ++l) {
            const double direct = dataCost(ctx, nv, labels.disp(l));
            CHECK(table[size_t(n * labels.count() + l)] == direct); // bitwise
        }
    }
}

TEST_CASE("alpha = 0 optimization reduces to the per-node argmin") {
    GridMeta g;
    g.dims = {20, 12, 12};
    g.spacing = {1, 1, 1};
    const Volume fixed = texture(g, 9);
    const Volume moving = texture(g, 10);
    const SscVolume df = computeSsc(fixed, 1);
    const SscVolume dm = computeSsc(moving, 1);
    DataCostContext ctx;
    ctx.desc_fixed = &df;
    ctx.desc_moving = &dm;

    const ControlGrid grid = ControlGrid::make(g.dims, 6, 0);
    const LabelSpace labels{1, 1};
    const std::vector<Vec3i> got = optimizeLevel(ctx, grid, labels, 0.0);
    const std::vector<double> table = dataCostTable(ctx, grid, labels);
    REQUIRE(std::int64_t(got.size()) == grid.count());
    for (std::int64_t n = 0; n < grid.count(); ++n) {
        double best = table[size_t(n * labels.count())];
        for (std::int64_t l = 1; l < labels.count(); ++l)
            best = std::min(best, table[size_t(n * labels.count() + l)]);
        // the chosen label attains the per-node minimum
        const Vec3i d = got[size_t(n)];
        const std::int64_t chosen =
            labels.index(d.x / labels.q + labels.l_max, d.y / labels.q + labels.l_max,
                         d.z / labels.q + labels.l_max);
        CHECK(table[size_t(n * labels.count() + chosen)] == doctest::Approx(best));
    }
}

TEST_CASE("tree optimization beats or matches zero assignment; polish never hurts") {
    GridMeta g;
    g.dims = {24, 16, 14};
    g.spacing = {1.5, 1.5, 1.5};
    const Volume fixed = texture(g, 11);
    Volume moving(g, Unit::Normalized);
    // moving = fixed shifted by 2 voxels in x (plus clamped border)
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i)
                moving.at(i, j, k) = fixed.at(std::min(g.dims.x - 1, i + 2), j, k);
    const SscVolume df = computeSsc(fixed, 1);
    const SscVolume dm = computeSsc(moving, 1);
    DataCostContext ctx;
    ctx.desc_fixed = &df;
    ctx.desc_moving = &dm;

    const ControlGrid grid = ControlGrid::make(g.dims, 5, 0);
    const LabelSpace labels{2, 1};
    const double alpha = 1.6;

    std::vector<Vec3i> disp = optimizeLevel(ctx, grid, labels, alpha);
    const std::vector<Vec3i> zeros(size_t(grid.count()), Vec3i{0, 0, 0});
    const double e_zero = totalEnergy(ctx, grid, labels, zeros, alpha);
    const double e_tree = totalEnergy(ctx, grid, labels, disp, alpha);
    CHECK(e_tree <= e_zero);

    icmRefine(ctx, grid, labels, alpha, disp);
    const double e_polished = totalEnergy(ctx, grid, labels, disp, alpha);
    CHECK(e_polished <= e_tree);

    // moving(i) = fixed(i+2), i.e. fixed(i) = moving(i-2): the best label maps
    // a fixed node to the moving position 2 voxels to its left, d.x = -2
    int votes = 0;
    for (const Vec3i& d : disp) votes += (d.x == -2);
    CHECK(votes > int(disp.size()) / 2);
}

TEST_CASE("field interpolation is exact for constant and linear node fields") {
    GridMeta target;
    target.dims = {17, 13, 9};
    target.spacing = {1.25, 1.0, 2.0};
    const ControlGrid grid = ControlGrid::make(target.dims, 4, 0);

    SUBCASE("constant") {
        const std::vector<Vec3> nodes(size_t(grid.count()), Vec3{1.5, -2.0, 0.75});
        const DisplacementField f = scaleField(nodes, grid, target);
        for (int k = 0; k < target.dims.z; ++k)
            for (int j = 0; j < target.dims.y; ++j)
                for (int i = 0; i < target.dims.x; ++i) {
                    const Vec3 u = f.at(i, j, k);
                    CHECK(u.x == doctest::Approx(1.5).epsilon(1e-12));
                    CHECK(u.y == doctest::Approx(-2.0).epsilon(1e-12));
                    CHECK(u.z == doctest::Approx(0.75).epsilon(1e-12));
                }
    }
    SUBCASE("linear in node coordinates") {
        std::vector<Vec3> nodes(size_t(grid.count()));
        for (std::int64_t n = 0; n < grid.count(); ++n) {
            const Vec3i abc = grid.abc(n);
            const Vec3i nv = grid.nodeVoxel(abc.x, abc.y, abc.z);
            nodes[size_t(n)] = {0.5 * nv.x, 0.25 * nv.y + 1.0, -0.1 * nv.z};
        }
        const DisplacementField f = scaleField(nodes, grid, target);
        // trilinear interpolation reproduces a field linear in voxel coords at
        // voxels inside the node lattice's bounding box
        const Vec3i lo = grid.nodeVoxel(0, 0, 0);
        const Vec3i hi = grid.nodeVoxel(grid.nodes.x - 1, grid.nodes.y - 1, grid.nodes.z - 1);
        for (int k = lo.z; k <= hi.z; ++k)
            for (int j = lo.y; j <= hi.y; ++j)
                for (int i = lo.x; i <= hi.x; ++i) {
                    const Vec3 u = f.at(i, j, k);
                    CHECK(u.x == doctest::Approx(0.5 * i).epsilon(1e-9));
                    CHECK(u.y == doctest::Approx(0.25 * j + 1.0).epsilon(1e-9));
                    CHECK(u.z == doctest::Approx(-0.1 * k).epsilon(1e-9));
                }
    }
}

TEST_CASE("deform config validation") {
    DeformConfig ok;
    CHECK_NOTHROW(ok.validate());
    DeformConfig bad = ok;
    bad.levels.clear();
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.levels[0].node_spacing = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.levels[0].q = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.alpha = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.patch_radius = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
