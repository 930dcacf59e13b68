#include "doctest.h"

#include <cmath>

#include "ablate/aes.hpp"
#include "ablate/edt.hpp"

#include <nlohmann/json.hpp>

using namespace ablate;

namespace {

GridMeta isoGrid(int n, double s) {
    GridMeta g;
    g.dims = {n, n, n};
    g.spacing = {s, s, s};
    return g;
}

Mask ball(const GridMeta& g, const Vec3& center, double radius) {
    Mask m(g);
    for (int k = 0; k < g.dims.z; ++k)
        for (int j = 0; j < g.dims.y; ++j)
            for (int i = 0; i < g.dims.x; ++i) {
                const Vec3 p = g.worldAt(i, j, k) - center;
                if (p.norm() <= radius) m.at(i, j, k) = 1;
            }
    return m;
}

} // namespace

TEST_CASE("planning volume is a superset of the tumor and monotone in the margin") {
    const GridMeta g = isoGrid(40, 1.25);
    const Mask tumor = ball(g, g.worldCenter(), 8.0);
    const Mask a2 = planningVolume(tumor, 2.0);
    const Mask a5 = planningVolume(tumor, 5.0);
    std::int64_t t_in_a2 = 0, a2_in_a5 = 0;
    for (size_t i = 0; i < tumor.voxels.size(); ++i) {
        if (tumor.voxels[i] && !a2.voxels[i]) ++t_in_a2;
        if (a2.voxels[i] && !a5.voxels[i]) ++a2_in_a5;
    }
    CHECK(t_in_a2 == 0);
    CHECK(a2_in_a5 == 0);
    CHECK(a5.count() > a2.count());
    CHECK(a2.count() > tumor.count());

    // a 5 mm margin around an 8 mm ball is close to a 13 mm ball
    const double analytic = 4.0 / 3.0 * 3.14159265358979323846 * 13.0 * 13.0 * 13.0;
    CHECK(a5.volumeMm3() == doctest::Approx(analytic).epsilon(0.03));

    // zero margin keeps exactly the tumor
    const Mask a0 = planningVolume(tumor, 0.0);
    CHECK(a0.voxels == tumor.voxels);

    Mask empty(g);
    CHECK_THROWS_AS(planningVolume(empty, 5.0), ValidationError);
    CHECK_THROWS_AS(planningVolume(tumor, -1.0), ValidationError);
}

TEST_CASE("region volumes and ratios on a hand-checked configuration") {
    const GridMeta g = isoGrid(8, 2.0); // voxel volume 8 mm^3
    Mask t(g), b(g), a(g);
    // T = 2x2x2 block at (1..2)^3, A = 3x3x3 block at (1..3)^3 containing T,
    // B = 2x2x2 block at (3..4)^3 overlapping both by one corner row
    for (int k = 1; k <= 2; ++k)
        for (int j = 1; j <= 2; ++j)
            for (int i = 1; i <= 2; ++i) t.at(i, j, k) = 1;
    for (int k = 1; k <= 3; ++k)
        for (int j = 1; j <= 3; ++j)
            for (int i = 1; i <= 3; ++i) a.at(i, j, k) = 1;
    for (int k = 3; k <= 4; ++k)
        for (int j = 3; j <= 4; ++j)
            for (int i = 3; i <= 4; ++i) b.at(i, j, k) = 1;

    const RegionVolumes rv = regionVolumes(t, b, a);
    CHECK(rv.vol_t == doctest::Approx(8 * 8.0));
    CHECK(rv.vol_a == doctest::Approx(27 * 8.0));
    CHECK(rv.vol_b == doctest::Approx(8 * 8.0));
    CHECK(rv.vol_t_and_b == doctest::Approx(0.0));  // T stops at 2, B starts at 3
    CHECK(rv.vol_b_and_a == doctest::Approx(1 * 8.0)); // only voxel (3,3,3)
    CHECK(rv.vol_b_minus_a == doctest::Approx(7 * 8.0));

    const CoverageRatios cr = coverageRatios(rv);
    CHECK(cr.cr1 == doctest::Approx(0.0));
    CHECK(cr.cr2 == doctest::Approx(1.0 / 27.0));
    CHECK(cr.er == doctest::Approx(7.0 / 8.0));
    CHECK_FALSE(cr.b_empty);

    // empty treatment: ratios defined as 0 and flagged
    const RegionVolumes rv0 = regionVolumes(t, Mask(g), a);
    const CoverageRatios cr0 = coverageRatios(rv0);
    CHECK(cr0.er == 0.0);
    CHECK(cr0.cr1 == 0.0);
    CHECK(cr0.b_empty);
}

TEST_CASE("score branches and classification boundaries") {
    const AESParams p;
    // perfect ablation
    CHECK(aesScore(1.0, 1.0, 0.0, p) == doctest::Approx(0.0));
    // cr1 below lambda takes the under branch (negative)
    CHECK(aesScore(0.2, 0.5, 0.1, p) < 0.0);
    // cr1 at lambda takes the over branch (non-negative)
    CHECK(aesScore(p.lambda, 0.5, 0.1, p) >= 0.0);
    // worse excess lowers the under branch further
    CHECK(aesScore(0.2, 0.5, 0.5, p) < aesScore(0.2, 0.5, 0.1, p));
    // more over-coverage with excess raises the over branch
    CHECK(aesScore(0.9, 0.3, 0.5, p) > aesScore(0.9, 0.9, 0.1, p));
    // closed forms
    CHECK(aesScore(0.0, 0.5, 1.0, p) == doctest::Approx(-1.0 + std::exp(-3.0)).epsilon(1e-12));
    CHECK(aesScore(0.9, 0.5, 0.25, p) ==
          doctest::Approx(1.0 - std::exp(-0.5 * 0.5 - 2.0 * 0.25)).epsilon(1e-12));
    // range stays inside (-1, 1)
    CHECK(aesScore(0.0, 0.0, 10.0, p) > -1.0);
    CHECK(aesScore(1.0, 0.0, 10.0, p) < 1.0);

    CHECK(classify(-0.8, 0.75) == AblationClass::Under);
    CHECK(classify(-0.75, 0.75) == AblationClass::Average); // boundary inclusive
    CHECK(classify(0.0, 0.75) == AblationClass::Average);
    CHECK(classify(0.75, 0.75) == AblationClass::Average);
    CHECK(classify(0.76, 0.75) == AblationClass::Over);

    CHECK(std::string(className(AblationClass::Under)) == "under");
    CHECK(std::string(className(AblationClass::Average)) == "average");
    CHECK(std::string(className(AblationClass::Over)) == "over");
}

TEST_CASE("params validation") {
    AESParams ok;
    CHECK_NOTHROW(ok.validate());
    AESParams bad = ok;
    bad.alpha = -0.1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.lambda = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = ok;
    bad.margin_mm = -2.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("full case evaluation produces a coherent report") {
    const GridMeta g = isoGrid(48, 1.25);
    const Vec3 c = g.worldCenter();
    const Mask tumor = ball(g, c, 8.0);
    const Mask treat = ball(g, c, 10.5);
    AESParams p;
    p.margin_mm = 5.0;
    const AESReport r = evaluateCase(tumor, treat, p, {{"tumor", "hash:abc"}});

    CHECK(r.ratios.cr1 == 1.0);  // the 10.5 mm ball covers the 8 mm tumor
    CHECK(r.ratios.er == 0.0);   // and stays inside the ~13 mm planned ball
    CHECK(r.aes >= 0.0);
    CHECK(r.cls == AblationClass::Average);
    CHECK(r.flags.empty());
    CHECK(r.inputs.at("tumor") == "hash:abc");

    // report JSON round-trips through a parser with the key fields present
    const nlohmann::json j = nlohmann::json::parse(r.toJson());
    CHECK(j["cr1"].get<double>() == doctest::Approx(r.ratios.cr1));
    CHECK(j["aes"].get<double>() == doctest::Approx(r.aes));
    CHECK(j["class"] == "average");
    CHECK(j["volumes_mm3"]["tumor"].get<double>() == doctest::Approx(r.volumes.vol_t));
    CHECK(j["inputs"]["tumor"] == "hash:abc");

    // empty treatment is flagged and forced to Under
    const AESReport r0 = evaluateCase(tumor, Mask(g), p);
    CHECK(r0.cls == AblationClass::Under);
    CHECK_FALSE(r0.flags.empty());
    CHECK(r0.ratios.b_empty);
}

TEST_CASE("hu statistics of the treated shell") {
    const GridMeta g = isoGrid(20, 1.0);
    Mask tumor(g), treat(g);
    // tumor: single voxel; treatment: 3x3x3 block around it -> shell of 26
    tumor.at(10, 10, 10) = 1;
    for (int k = 9; k <= 11; ++k)
        for (int j = 9; j <= 11; ++j)
            for (int i = 9; i <= 11; ++i) treat.at(i, j, k) = 1;

    Volume pre = Volume::filled(g, Unit::HU, -800.f);  // aerated
    Volume post = Volume::filled(g, Unit::HU, -100.f); // consolidated
    // plant one outlier on each side inside the shell
    pre.at(9, 9, 9) = -100.f;
    post.at(9, 9, 9) = -800.f;

    const HuRegionStats st = huRegionStats(pre, post, tumor, treat);
    CHECK(st.count == 26);
    CHECK(st.pre_frac_below == doctest::Approx(25.0 / 26.0));
    CHECK(st.post_frac_below == doctest::Approx(1.0 / 26.0));
    CHECK(st.pre_mean == doctest::Approx((-800.0 * 25 - 100.0) / 26.0));
    CHECK(st.post_mean == doctest::Approx((-100.0 * 25 - 800.0) / 26.0));
    CHECK(st.pre_median == doctest::Approx(-800.0));
    CHECK(st.post_median == doctest::Approx(-100.0));
    std::int64_t pre_total = 0, post_total = 0;
    for (const auto b : st.pre_hist) pre_total += b;
    for (const auto b : st.post_hist) post_total += b;
    CHECK(pre_total == 26);
    CHECK(post_total == 26);
    CHECK(st.pre_hist.size() == size_t((st.range_hi - st.range_lo) / st.bin_width));

    // stats json parses and exposes the separation fractions
    const nlohmann::json j = nlohmann::json::parse(st.toJson());
    CHECK(j["count"].get<std::int64_t>() == 26);
    CHECK(j["pre"]["frac_below_threshold"].get<double>() ==
          doctest::Approx(st.pre_frac_below));
    CHECK(j["post"]["frac_below_threshold"].get<double>() ==
          doctest::Approx(st.post_frac_below));
}
