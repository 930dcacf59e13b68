#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "ablate/edt.hpp"
#include "ablate/phantom.hpp"

using namespace ablate;

namespace {

GridMeta grid(int nx, int ny, int nz, Vec3 sp) {
    GridMeta g;
    g.dims = {nx, ny, nz};
    g.spacing = sp;
    return g;
}

// O(V^2) reference: squared distance to the nearest foreground voxel center.
std::vector<double> bruteSquaredEdt(const Mask& m) {
    const auto& g = m.meta;
    std::vector<double> out(size_t(g.voxelCount()), std::numeric_limits<double>::infinity());
    std::vector<Vec3> seeds;
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i)
                if (m.at(i, j, k)) seeds.push_back(g.worldAt(i, j, k));
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i) {
                const Vec3 p = g.worldAt(i, j, k);
                double best = std::numeric_limits<double>::infinity();
                for (const Vec3& s : seeds) best = std::min(best, (p - s).norm2());
                out[size_t(g.index(i, j, k))] = best;
            }
    return out;
}

Mask ball(const GridMeta& g, Vec3 center, double r) {
    Mask m(g);
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i)
                if ((g.worldAt(i, j, k) - center).norm() <= r) m.at(i, j, k) = 1;
    return m;
}

} // namespace

TEST_CASE("squared edt matches brute force on random anisotropic masks") {
    const GridMeta g = grid(9, 7, 6, {1.0, 1.5, 2.0});
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Mask m(g);
        for (size_t i = 0; i < m.voxels.size(); ++i)
            m.voxels[i] = phantomNoise(seed, i, 0) > 0.7 ? 1 : 0;
        if (m.empty()) m.voxels[0] = 1;
        const std::vector<float> fast = squaredEdt(m);
        const std::vector<double> ref = bruteSquaredEdt(m);
        for (size_t i = 0; i < fast.size(); ++i)
            CHECK(double(fast[i]) == doctest::Approx(ref[i]).epsilon(1e-5));
    }
}

TEST_CASE("squared edt of an empty mask is infinite and inside is zero") {
    const GridMeta g = grid(4, 4, 4, {1, 1, 1});
    const Mask empty(g);
    const std::vector<float> d = squaredEdt(empty);
    for (const float v : d) CHECK(std::isinf(v));

    Mask one(g);
    one.at(2, 1, 3) = 1;
    const std::vector<float> d1 = squaredEdt(one);
    CHECK(d1[size_t(g.index(2, 1, 3))] == 0.0f);
    CHECK(d1[size_t(g.index(3, 1, 3))] == 1.0f);
    CHECK(d1[size_t(g.index(2, 3, 3))] == 4.0f);
}

TEST_CASE("dilate and erode move a ball surface by the radius") {
    const GridMeta g = grid(25, 25, 25, {1, 1, 1});
    const Vec3 c = g.worldCenter();
    const Mask b5 = ball(g, c, 5.0);

    const Mask grown = dilateMask(b5, 3.0);
    // grown should sit between center-distance balls of radius 7.5 and 8.5
    CHECK(ball(g, c, 7.4).count() <= grown.count());
    CHECK(grown.count() <= ball(g, c, 8.6).count());
    for (size_t i = 0; i < b5.voxels.size(); ++i)
        if (b5.voxels[i]) CHECK(grown.voxels[i] == 1); // dilation is a superset

    const Mask shrunk = erodeMask(b5, 3.0);
    CHECK(ball(g, c, 1.4).count() <= shrunk.count());
    CHECK(shrunk.count() <= ball(g, c, 2.6).count());
    for (size_t i = 0; i < b5.voxels.size(); ++i)
        if (shrunk.voxels[i]) CHECK(b5.voxels[i] == 1); // erosion is a subset

    CHECK(dilateMask(b5, 0.0).voxels == b5.voxels);
    CHECK(erodeMask(b5, 0.0).voxels == b5.voxels);
    CHECK_THROWS_AS(dilateMask(b5, -1.0), ValidationError);
    CHECK_THROWS_AS(erodeMask(b5, -1.0), ValidationError);
}

TEST_CASE("closing fills a small interior gap without growing the outside") {
    const GridMeta g = grid(20, 20, 20, {1, 1, 1});
    const Vec3 c = g.worldCenter();
    Mask m = ball(g, c, 6.0);
    // carve a 1-voxel pinhole
    m.at(10, 10, 10) = 0;
    const Mask closed = closeMask(m, 2.0);
    CHECK(closed.at(10, 10, 10) == 1);
    // closing never exceeds the dilation of the input
    const Mask upper = dilateMask(m, 2.0);
    for (size_t i = 0; i < m.voxels.size(); ++i)
        if (closed.voxels[i]) CHECK(upper.voxels[i] == 1);
}

TEST_CASE("boundary dilation tracks the analytic radius of a ball") {
    const GridMeta g = grid(36, 36, 36, {1.25, 1.25, 1.25});
    const Vec3 c = g.worldCenter();
    const double r = 10.0, margin = 5.0;
    const Mask tumor = ball(g, c, r);
    const Mask planned = dilateMaskBoundary(tumor, margin);

    // input is always kept
    for (size_t i = 0; i < tumor.voxels.size(); ++i)
        if (tumor.voxels[i]) CHECK(planned.voxels[i] == 1);

    // volume within ~1.5% of the analytic (r + margin) ball
    const double analytic = 4.0 / 3.0 * 3.14159265358979323846 * std::pow(r + margin, 3);
    const double got = double(planned.count()) * g.voxelVolumeMm3();
    CHECK(std::abs(got - analytic) / analytic < 0.015);

    CHECK(dilateMaskBoundary(tumor, 0.0).voxels == tumor.voxels);
    CHECK_THROWS_AS(dilateMaskBoundary(tumor, -0.5), ValidationError);
    const Mask empty(g);
    CHECK_THROWS_AS(dilateMaskBoundary(empty, 1.0), ValidationError);
}

TEST_CASE("boundary dilation matches a face-sample oracle on a small object") {
    const GridMeta g = grid(12, 12, 12, {1.0, 1.25, 0.75});
    Mask m(g);
    for (size_t i = 0; i < m.voxels.size(); ++i)
        m.voxels[i] = phantomNoise(21, i, 5) > 0.8 ? 1 : 0;
    m.at(6, 6, 6) = 1;
    const double margin = 1.6;
    const Mask out = dilateMaskBoundary(m, margin);

    // collect the face centers between inside voxels and their non-inside
    // 6-neighbors (including virtual outside-of-grid neighbors)
    std::vector<Vec3> faces;
    const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i) {
                if (!m.at(i, j, k)) continue;
                for (const auto& o : off) {
                    const int ni = i + o[0], nj = j + o[1], nk = k + o[2];
                    if (g.contains(ni, nj, nk) && m.at(ni, nj, nk)) continue;
                    const Vec3 a = g.worldAt(i, j, k);
                    faces.push_back(a + Vec3{o[0] * g.spacing.x, o[1] * g.spacing.y,
                                             o[2] * g.spacing.z} * 0.5);
                }
            }
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i) {
                if (m.at(i, j, k)) continue;
                const Vec3 p = g.worldAt(i, j, k);
                double best = std::numeric_limits<double>::infinity();
                for (const Vec3& f : faces) best = std::min(best, (p - f).norm());
                // skip voxels within float rounding of the shell surface
                if (std::abs(best - margin) < 1e-3) continue;
                CHECK(int(out.at(i, j, k)) == int(best < margin));
            }
}
