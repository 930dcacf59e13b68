#include "ablate/aes.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "ablate/edt.hpp"
#include "ablate/error.hpp"

namespace ablate {

void AESParams::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || theta < 0)
        throw ValidationError("aes params: weights must be >= 0");
    if (!(lambda > 0 && lambda < 1)) throw ValidationError("aes params: lambda must be in (0,1)");
    if (margin_mm < 5.0 || margin_mm > 10.0)
        throw ValidationError("aes params: margin must be within 5-10 mm");
}

const char* className(AblationClass c) {
    switch (c) {
        case AblationClass::Under: return "under";
        case AblationClass::Over: return "over";
        default: return "average";
    }
}

Mask planningVolume(const Mask& tumor, double margin_mm) {
    if (margin_mm < 0) throw ValidationError("planning volume: margin must be >= 0");
    if (tumor.empty()) throw ValidationError("planning volume: empty tumor mask");
    // Boundary-measured dilation: the clinical margin extends from the tumor
    // border, and center-distance dilation under-reaches by about half a
    // voxel, which at 1.25 mm spacing shifts ER by several percent of the
    // treatment volume.
    return dilateMaskBoundary(tumor, margin_mm);
}

RegionVolumes regionVolumes(const Mask& tumor, const Mask& treatment, const Mask& planned) {
    requireSameGrid(tumor.meta, treatment.meta, "region_volumes");
    requireSameGrid(tumor.meta, planned.meta, "region_volumes");
    std::int64_t nt = 0, nb = 0, na = 0, ntb = 0, nba = 0, nb_not_a = 0;
    for (size_t i = 0; i < tumor.voxels.size(); ++i) {
        const bool t = tumor.voxels[i], b = treatment.voxels[i], a = planned.voxels[i];
        nt += t;
        nb += b;
        na += a;
        ntb += t && b;
        nba += b && a;
        nb_not_a += b && !a;
    }
    if (nt == 0) throw ValidationError("region_volumes: empty tumor mask");
    const double vx = tumor.meta.voxelVolumeMm3();
    return {nt * vx, nb * vx, na * vx, ntb * vx, nba * vx, nb_not_a * vx};
}

CoverageRatios coverageRatios(const RegionVolumes& rv) {
    if (rv.vol_t <= 0) throw ValidationError("coverage_ratios: tumor volume must be > 0");
    if (rv.vol_a <= 0) throw ValidationError("coverage_ratios: planned volume must be > 0");
    CoverageRatios r;
    r.b_empty = rv.vol_b <= 0;
    r.cr1 = rv.vol_t_and_b / rv.vol_t;
    r.cr2 = rv.vol_b_and_a / rv.vol_a;
    r.er = r.b_empty ? 0.0 : rv.vol_b_minus_a / rv.vol_b;
    return r;
}

double aesScore(double cr1, double cr2, double er, const AESParams& params) {
    params.validate();
    if (cr1 < 0 || cr1 > 1 || cr2 < 0 || cr2 > 1 || er < 0 || er > 1)
        throw ValidationError("aes_score: ratios must be within [0,1]");
    if (cr1 < params.lambda)
        return -1.0 + std::exp(-params.alpha * (1.0 - cr1) - params.beta * er);
    return 1.0 - std::exp(-params.gamma * (1.0 - cr2) - params.theta * er);
}

AblationClass classify(double aes, double lambda) {
    if (aes < -lambda) return AblationClass::Under;
    if (aes > lambda) return AblationClass::Over;
    return AblationClass::Average;
}

AESReport evaluateCase(const Mask& tumor_reg, const Mask& treatment, const AESParams& params,
                       const std::map<std::string, std::string>& provenance) {
    params.validate();
    AESReport rep;
    rep.params = params;
    rep.inputs = provenance;
    const Mask planned = planningVolume(tumor_reg, params.margin_mm);
    rep.volumes = regionVolumes(tumor_reg, treatment, planned);
    rep.ratios = coverageRatios(rep.volumes);
    rep.aes = aesScore(rep.ratios.cr1, rep.ratios.cr2, rep.ratios.er, params);
    rep.cls = classify(rep.aes, params.lambda);
    if (rep.ratios.b_empty) {
        rep.flags.push_back("treatment mask empty");
        rep.cls = AblationClass::Under;
    }
    return rep;
}

std::string AESReport::toJson() const {
    nlohmann::json j;
    j["volumes_mm3"] = {{"tumor", volumes.vol_t},
                        {"treatment", volumes.vol_b},
                        {"planned", volumes.vol_a},
                        {"tumor_and_treatment", volumes.vol_t_and_b},
                        {"treatment_and_planned", volumes.vol_b_and_a},
                        {"treatment_minus_planned", volumes.vol_b_minus_a}};
    j["cr1"] = ratios.cr1;
    j["cr2"] = ratios.cr2;
    j["er"] = ratios.er;
    j["aes"] = aes;
    j["class"] = className(cls);
    j["params"] = {{"alpha", params.alpha},   {"beta", params.beta},
                   {"gamma", params.gamma},   {"theta", params.theta},
                   {"lambda", params.lambda}, {"margin_mm", params.margin_mm}};
    j["flags"] = flags;
    j["inputs"] = inputs;
    return j.dump(2);
}

HuRegionStats huRegionStats(const Volume& pre_registered, const Volume& post,
                            const Mask& tumor_reg, const Mask& treatment, double threshold_hu) {
    requireSameGrid(pre_registered.meta, post.meta, "hu_region_stats");
    requireSameGrid(pre_registered.meta, tumor_reg.meta, "hu_region_stats tumor");
    requireSameGrid(pre_registered.meta, treatment.meta, "hu_region_stats treatment");
    if (pre_registered.unit != Unit::HU || post.unit != Unit::HU)
        throw ValidationError("hu_region_stats: volumes must be in HU");

    HuRegionStats s;
    s.threshold = threshold_hu;
    const int n_bins = int(std::lround((s.range_hi - s.range_lo) / s.bin_width));
    s.pre_hist.assign(static_cast<std::size_t>(n_bins), 0);
    s.post_hist.assign(static_cast<std::size_t>(n_bins), 0);

    std::vector<float> pre_vals, post_vals;
    for (size_t i = 0; i < treatment.voxels.size(); ++i) {
        if (!treatment.voxels[i] || tumor_reg.voxels[i]) continue; // region = B \ T
        pre_vals.push_back(pre_registered.voxels[i]);
        post_vals.push_back(post.voxels[i]);
    }
    if (pre_vals.empty()) throw ValidationError("hu_region_stats: empty region (B \\ T)");
    s.count = std::int64_t(pre_vals.size());

    auto binOf = [&](double v) {
        const int b = int(std::floor((v - s.range_lo) / s.bin_width));
        return std::clamp(b, 0, n_bins - 1);
    };
    double pre_sum = 0, post_sum = 0;
    std::int64_t pre_below = 0, post_below = 0;
    for (size_t i = 0; i < pre_vals.size(); ++i) {
        s.pre_hist[size_t(binOf(pre_vals[i]))]++;
        s.post_hist[size_t(binOf(post_vals[i]))]++;
        pre_sum += pre_vals[i];
        post_sum += post_vals[i];
        pre_below += pre_vals[i] < threshold_hu;
        post_below += post_vals[i] < threshold_hu;
    }
    const double n = double(s.count);
    s.pre_mean = pre_sum / n;
    s.post_mean = post_sum / n;
    s.pre_frac_below = double(pre_below) / n;
    s.post_frac_below = double(post_below) / n;

    auto median = [](std::vector<float>& v) {
        std::sort(v.begin(), v.end());
        const size_t m = v.size() / 2;
        if (v.size() % 2 == 1) return double(v[m]);
        return (double(v[m - 1]) + double(v[m])) / 2.0;
    };
    s.pre_median = median(pre_vals);
    s.post_median = median(post_vals);
    return s;
}

std::string HuRegionStats::toJson() const {
    nlohmann::json j;
    j["bin_width"] = bin_width;
    j["range"] = {range_lo, range_hi};
    j["threshold"] = threshold;
    j["count"] = count;
    j["pre"] = {{"hist", pre_hist},
                {"mean", pre_mean},
                {"median", pre_median},
                {"frac_below_threshold", pre_frac_below}};
    j["post"] = {{"hist", post_hist},
                 {"mean", post_mean},
                 {"median", post_median},
                 {"frac_below_threshold", post_frac_below}};
    return j.dump(2);
}

} // namespace ablate
