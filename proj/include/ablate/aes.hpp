#pragma once

#include <map>
#include <string>
#include <vector>

#include "ablate/volume.hpp"

namespace ablate {

struct AESParams {
    double alpha = 1.0;  // under-ablation CR1 weight
    double beta = 2.0;   // under-ablation ER weight
    double gamma = 0.5;  // over-ablation CR2 weight
    double theta = 2.0;  // over-ablation ER weight
    double lambda = 0.75; // branch threshold and classification band edge
    double margin_mm = 5.0; // planning margin around the tumor (clinical 5-10)

    void validate() const;
};

// All in mm^3 (voxel counts times voxel volume).
struct RegionVolumes {
    double vol_t = 0;         // tumor (registered)
    double vol_b = 0;         // treatment
    double vol_a = 0;         // planned = tumor dilated by the margin
    double vol_t_and_b = 0;
    double vol_b_and_a = 0;
    double vol_b_minus_a = 0;
};

struct CoverageRatios {
    double cr1 = 0; // |T n B| / |T|
    double cr2 = 0; // |B n A| / |A|
    double er = 0;  // |B \ A| / |B|, defined 0 when B is empty (flagged)
    bool b_empty = false;
};

enum class AblationClass { Under, Average, Over };
const char* className(AblationClass c);

struct AESReport {
    RegionVolumes volumes;
    CoverageRatios ratios;
    double aes = 0;
    AblationClass cls = AblationClass::Average;
    AESParams params;
    std::vector<std::string> flags;
    std::map<std::string, std::string> inputs; // label -> path/hash provenance

    std::string toJson() const;
};

// Planned ablation volume: every voxel whose center lies within margin_mm of
// the tumor (exact Euclidean distance, anisotropic spacing). Includes the
// tumor itself; errors on an empty tumor mask.
Mask planningVolume(const Mask& tumor, double margin_mm);

RegionVolumes regionVolumes(const Mask& tumor, const Mask& treatment, const Mask& planned);
CoverageRatios coverageRatios(const RegionVolumes& rv);

// Two-branch exponential score in (-1, 1): the under branch (cr1 < lambda)
// gives -1 + exp(-alpha*(1-cr1) - beta*er) <= 0, the other branch gives
// 1 - exp(-gamma*(1-cr2) - theta*er) >= 0. cr1 = lambda takes the second.
double aesScore(double cr1, double cr2, double er, const AESParams& params);

// under iff aes < -lambda, over iff aes > lambda, average otherwise.
AblationClass classify(double aes, double lambda);

// HU distributions of the treated-but-not-tumor region (B \ T_reg).
struct HuRegionStats {
    double bin_width = 25.0;
    double range_lo = -1000.0, range_hi = 400.0;
    double threshold = -600.0;
    std::vector<std::int64_t> pre_hist, post_hist; // 56 bins, clamped at the edges
    double pre_mean = 0, post_mean = 0;
    double pre_median = 0, post_median = 0;
    double pre_frac_below = 0, post_frac_below = 0; // fraction strictly below threshold
    std::int64_t count = 0;

    std::string toJson() const;
};

HuRegionStats huRegionStats(const Volume& pre_registered, const Volume& post, const Mask& tumor_reg,
                            const Mask& treatment, double threshold_hu = -600.0);

// Full scoring pass: planned volume from the registered tumor, region
// algebra, ratios, score, classification. An empty treatment mask is flagged
// and forces classification to Under (a missing B is a pipeline failure, not
// a good score).
AESReport evaluateCase(const Mask& tumor_reg, const Mask& treatment, const AESParams& params = {},
                       const std::map<std::string, std::string>& provenance = {});

} // namespace ablate
