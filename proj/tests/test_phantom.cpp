#include "doctest.h"

#include <cmath>

#include "ablate/metrics.hpp"
#include "ablate/phantom.hpp"

using namespace ablate;

namespace {

PhantomConfig smallConfig(std::uint64_t seed) {
    PhantomConfig cfg;
    cfg.seed = seed;
    cfg.dims = {64, 64, 64};
    cfg.spacing = {1.6, 1.6, 1.6};
    cfg.smooth_passes = 1;
    return cfg;
}

} // namespace

TEST_CASE("identical configs reproduce identical bytes; seeds differ") {
    const PhantomConfig cfg = smallConfig(5);
    const Phantom a = makePhantom(cfg);
    const Phantom b = makePhantom(cfg);
    CHECK(a.volume.voxels == b.volume.voxels);
    CHECK(a.lung.voxels == b.lung.voxels);
    CHECK(a.tumor.voxels == b.tumor.voxels);

    PhantomConfig other = cfg;
    other.seed = 6;
    const Phantom c = makePhantom(other);
    CHECK(a.volume.voxels != c.volume.voxels);
    // masks are analytic, independent of the noise seed
    CHECK(a.lung.voxels == c.lung.voxels);
    CHECK(a.tumor.voxels == c.tumor.voxels);
}

TEST_CASE("phantom anatomy has the expected intensity structure") {
    const PhantomConfig cfg = smallConfig(7);
    const Phantom ph = makePhantom(cfg);
    CHECK(ph.volume.meta.dims == cfg.dims);
    CHECK(ph.volume.unit == Unit::HU);
    REQUIRE_FALSE(ph.lung.empty());
    REQUIRE_FALSE(ph.tumor.empty());

    // tumor sits inside the lung field
    for (size_t i = 0; i < ph.tumor.voxels.size(); ++i)
        if (ph.tumor.voxels[i]) CHECK(ph.lung.voxels[i] == 1);

    // corner voxel is exterior air
    CHECK(ph.volume.at(0, 0, 0) == doctest::Approx(cfg.exterior_hu).epsilon(0.05));

    // mean HU over lung (minus tumor) is near lung_hu; tumor mean near tumor_hu
    double lung_sum = 0, tumor_sum = 0;
    std::int64_t lung_n = 0, tumor_n = 0;
    for (int k = 0; k < cfg.dims.z; ++k)
        for (int j = 0; j < cfg.dims.y; ++j)
            for (int i = 0; i < cfg.dims.x; ++i) {
                if (ph.tumor.at(i, j, k)) {
                    tumor_sum += ph.volume.at(i, j, k);
                    ++tumor_n;
                } else if (ph.lung.at(i, j, k)) {
                    lung_sum += ph.volume.at(i, j, k);
                    ++lung_n;
                }
            }
    CHECK(lung_sum / double(lung_n) < -600.0);   // aerated
    CHECK(tumor_sum / double(tumor_n) > -250.0); // soft tissue, smoothing drags it down

    // the lung mask matches the analytic ellipsoids it claims to be
    const Vec3 rc{cfg.lung_center_x_mm, 0, 0}, lc{-cfg.lung_center_x_mm, 0, 0};
    for (int k = 0; k < cfg.dims.z; ++k)
        for (int j = 0; j < cfg.dims.y; ++j)
            for (int i = 0; i < cfg.dims.x; ++i) {
                const Vec3 p = ph.volume.meta.worldAt(i, j, k);
                auto inside = [&](const Vec3& c) {
                    const double x = (p.x - c.x) / cfg.lung_semi_axes.x;
                    const double y = (p.y - c.y) / cfg.lung_semi_axes.y;
                    const double z = (p.z - c.z) / cfg.lung_semi_axes.z;
                    return x * x + y * y + z * z <= 1.0;
                };
                CHECK(int(ph.lung.at(i, j, k)) == int(inside(rc) || inside(lc)));
            }
}

TEST_CASE("phantom config validation") {
    PhantomConfig ok = smallConfig(1);
    CHECK_NOTHROW(ok.validate());
    PhantomConfig bad = ok;
    bad.dims = {4, 64, 64};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.spacing = {0, 1, 1};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.tumor_radius_mm = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.smooth_passes = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("noise stream is deterministic, bounded, and seed-sensitive") {
    for (std::uint64_t i = 0; i < 2000; ++i) {
        const double v = phantomNoise(42, i, 3);
        CHECK(v >= -1.0);
        CHECK(v < 1.0);
        CHECK(v == phantomNoise(42, i, 3));
    }
    // different seeds / salts / indices decorrelate
    CHECK(phantomNoise(1, 10, 0) != phantomNoise(2, 10, 0));
    CHECK(phantomNoise(1, 10, 0) != phantomNoise(1, 11, 0));
    CHECK(phantomNoise(1, 10, 0) != phantomNoise(1, 10, 1));
    // roughly centered
    double s = 0;
    for (std::uint64_t i = 0; i < 4000; ++i) s += phantomNoise(9, i, 0);
    CHECK(std::abs(s / 4000.0) < 0.05);
}

TEST_CASE("empty synthetic field is the identity with a zero truth field") {
    const PhantomConfig cfg = smallConfig(3);
    const Phantom ph = makePhantom(cfg);
    const SyntheticField none{};
    const auto [warped, truth] = applySyntheticField(ph.volume, none);
    CHECK(warped.voxels == ph.volume.voxels);
    for (const float v : truth.vectors) CHECK(v == 0.0f);
    CHECK(truth.meta == ph.volume.meta);
}

TEST_CASE("gaussian bump fields evaluate and warp as documented") {
    SyntheticField f;
    f.bumps.push_back({{0, 0, 0}, {3.0, 0, 0}, 10.0});
    // peak at the center, decays with distance
    CHECK(f.evaluate({0, 0, 0}).x == doctest::Approx(3.0));
    CHECK(f.evaluate({10, 0, 0}).x == doctest::Approx(3.0 * std::exp(-0.5)));
    CHECK(f.evaluate({0, 0, 0}).y == doctest::Approx(0.0));
    const double far = f.evaluate({100, 0, 0}).x;
    CHECK(std::abs(far) < 1e-8);

    // respiratory preset peaks at the requested magnitude inside the lungs
    const PhantomConfig cfg = smallConfig(2);
    const SyntheticField resp = SyntheticField::respiratory(6.0, cfg);
    REQUIRE_FALSE(resp.bumps.empty());
    double peak = 0;
    for (const auto& b : resp.bumps) peak = std::max(peak, b.peak_mm.norm());
    CHECK(peak == doctest::Approx(6.0).epsilon(1e-9));
    // dominant superior-inferior (z) component
    for (const auto& b : resp.bumps)
        CHECK(std::abs(b.peak_mm.z) > std::hypot(b.peak_mm.x, b.peak_mm.y));

    // truth field samples the analytic field at voxel centers
    const Phantom ph = makePhantom(cfg);
    const auto [warped, truth] = applySyntheticField(ph.volume, resp);
    const GridMeta& g = ph.volume.meta;
    for (int k = 0; k < g.dims.z; k += 13)
        for (int j = 0; j < g.dims.y; j += 11)
            for (int i = 0; i < g.dims.x; i += 7) {
                const Vec3 expect = resp.evaluate(g.worldAt(i, j, k));
                const Vec3 got = truth.at(i, j, k);
                CHECK(got.x == doctest::Approx(expect.x).epsilon(1e-5));
                CHECK(got.y == doctest::Approx(expect.y).epsilon(1e-5));
                CHECK(got.z == doctest::Approx(expect.z).epsilon(1e-5));
            }
    // the warp actually moved lung structure
    CHECK(warped.voxels != ph.volume.voxels);
}

TEST_CASE("ablation stamp rewrites the zone and returns the analytic mask") {
    const PhantomConfig cfg = smallConfig(11);
    const Phantom ph = makePhantom(cfg);
    AblationSpec spec;
    spec.zone_radius_mm = 14.0;
    spec.hu = -150.0;
    const auto [post, zone] = simulateAblation(ph.volume, ph.tumor, spec);

    REQUIRE_FALSE(zone.empty());
    CHECK(post.meta == ph.volume.meta);

    // zone center: tumor centroid; voxels inside the full-strength core read
    // exactly the ablation HU, the far field is untouched
    double sx = 0, sy = 0, sz = 0;
    std::int64_t n = 0;
    const GridMeta& g = ph.volume.meta;
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i)
                if (ph.tumor.at(i, j, k)) {
                    const Vec3 p = g.worldAt(i, j, k);
                    sx += p.x;
                    sy += p.y;
                    sz += p.z;
                    ++n;
                }
    const Vec3 centroid{sx / double(n), sy / double(n), sz / double(n)};

    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i) {
                const double d = (g.worldAt(i, j, k) - centroid).norm();
                // skip voxels within an ulp-safety band of the sphere surface
                if (std::abs(d - spec.zone_radius_mm) > 1e-6)
                    CHECK(int(zone.at(i, j, k)) == int(d <= spec.zone_radius_mm));
                if (d <= spec.zone_radius_mm - 1e-6)
                    CHECK(post.at(i, j, k) == float(spec.hu));
                if (d > spec.zone_radius_mm + spec.blend_mm + 1e-6)
                    CHECK(post.at(i, j, k) == ph.volume.at(i, j, k)); // untouched far field
            }

    // offset ablations move the zone off the tumor
    AblationSpec off = spec;
    off.center_offset_mm = {6.0, 0, 0};
    const auto [post2, zone2] = simulateAblation(ph.volume, ph.tumor, off);
    CHECK_FALSE(zone2.empty());
    CHECK(zone2.voxels != zone.voxels);
    // its centroid shifts by about the offset
    double ox = 0;
    std::int64_t on = 0;
    double zx = 0;
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i) {
                if (zone2.at(i, j, k)) {
                    ox += g.worldAt(i, j, k).x;
                    ++on;
                }
                if (zone.at(i, j, k)) zx += g.worldAt(i, j, k).x;
            }
    CHECK(ox / double(on) - zx / double(zone.count()) ==
          doctest::Approx(6.0).epsilon(0.05));
}
