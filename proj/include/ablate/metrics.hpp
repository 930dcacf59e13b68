#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ablate/volume.hpp"

namespace ablate {

// Pearson correlation of intensities over the region (whole grid when absent).
// Returns 0 if either variance is zero.
double ncc(const Volume& a, const Volume& b, const Mask* region = nullptr);

struct SsimParams {
    int window = 7; // cubic window edge, stride 1, valid-region mean
    double k1 = 0.01;
    double k2 = 0.03;
    // default: max - min of the first argument
    std::optional<double> dynamic_range;
};

double ssim3d(const Volume& a, const Volume& b, const SsimParams& params = {});

double rmse(const Volume& a, const Volume& b, const Mask* region = nullptr);

// 2|a∩b| / (|a|+|b|); defined as 1 when both masks are empty.
double dice(const Mask& a, const Mask& b);

struct MetricReport {
    double ncc = 0, ssim = 0, rmse = 0, dice = 0;
    std::string region; // description of the mask used
    std::string toJson() const;
    std::string toCsvRow(const std::string& label) const;
    static std::string csvHeader();
};

MetricReport computeMetrics(const Volume& a, const Volume& b, const Mask* lung_a,
                            const Mask* lung_b, const Mask* region,
                            const std::string& region_name);

struct SpearmanResult {
    double rho = 0;
    double p_value = 1;
};

// Rank correlation with average ranks for ties. p-value from the two-sided
// Student-t approximation t = rho*sqrt((n-2)/(1-rho^2)); when exact_permutation
// is set (allowed for n <= 10) the p-value is the exact permutation tail of |rho|.
SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y,
                        bool exact_permutation = false);

// Unweighted Cohen's kappa over two equal-length label lists.
double cohenKappa(const std::vector<int>& r1, const std::vector<int>& r2);

} // namespace ablate
