#include "ablate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <nlohmann/json.hpp>
#include <sstream>

namespace ablate {

double ncc(const Volume& a, const Volume& b, const Mask* region) {
    requireSameGrid(a.meta, b.meta, "ncc");
    if (region) requireSameGrid(a.meta, region->meta, "ncc region");

    // two-pass: means first, then centered products
    double sa = 0, sb = 0;
    std::int64_t n = 0;
    const std::int64_t total = a.meta.voxelCount();
    for (std::int64_t i = 0; i < total; ++i) {
        if (region && !region->voxels[size_t(i)]) continue;
        sa += a.voxels[size_t(i)];
        sb += b.voxels[size_t(i)];
        ++n;
    }
    if (n == 0) throw ValidationError("ncc: empty region");
    const double ma = sa / double(n), mb = sb / double(n);

    double sab = 0, saa = 0, sbb = 0;
    for (std::int64_t i = 0; i < total; ++i) {
        if (region && !region->voxels[size_t(i)]) continue;
        const double da = a.voxels[size_t(i)] - ma;
        const double db = b.voxels[size_t(i)] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double rmse(const Volume& a, const Volume& b, const Mask* region) {
    requireSameGrid(a.meta, b.meta, "rmse");
    if (region) requireSameGrid(a.meta, region->meta, "rmse region");
    double s = 0;
    std::int64_t n = 0;
    const std::int64_t total = a.meta.voxelCount();
    for (std::int64_t i = 0; i < total; ++i) {
        if (region && !region->voxels[size_t(i)]) continue;
        const double d = double(a.voxels[size_t(i)]) - double(b.voxels[size_t(i)]);
        s += d * d;
        ++n;
    }
    if (n == 0) throw ValidationError("rmse: empty region");
    return std::sqrt(s / double(n));
}

double dice(const Mask& a, const Mask& b) {
    requireSameGrid(a.meta, b.meta, "dice");
    std::int64_t na = 0, nb = 0, ni = 0;
    for (size_t i = 0; i < a.voxels.size(); ++i) {
        na += a.voxels[i];
        nb += b.voxels[i];
        ni += a.voxels[i] & b.voxels[i];
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * double(ni) / double(na + nb);
}

namespace {

// Sliding w-box sums per xy slice (x pass then y pass), double precision.
void boxSum2d(const std::vector<double>& in, int nx, int ny, int w, std::vector<double>& tmp,
              std::vector<double>& out) {
    const int ox = nx - w + 1, oy = ny - w + 1;
    // x pass: tmp[ox * ny]
    for (int j = 0; j < ny; ++j) {
        double run = 0;
        const double* row = in.data() + size_t(j) * nx;
        for (int i = 0; i < w; ++i) run += row[i];
        tmp[size_t(j) * ox] = run;
        for (int i = 1; i < ox; ++i) {
            run += row[i + w - 1] - row[i - 1];
            tmp[size_t(j) * ox + i] = run;
        }
    }
    // y pass: out[ox * oy]
    for (int i = 0; i < ox; ++i) {
        double run = 0;
        for (int j = 0; j < w; ++j) run += tmp[size_t(j) * ox + i];
        out[i] = run;
        for (int j = 1; j < oy; ++j) {
            run += tmp[size_t(j + w - 1) * ox + i] - tmp[size_t(j - 1) * ox + i];
            out[size_t(j) * ox + i] = run;
        }
    }
}

} // namespace

double ssim3d(const Volume& a, const Volume& b, const SsimParams& params) {
    requireSameGrid(a.meta, b.meta, "ssim3d");
    const int w = params.window;
    const auto& d = a.meta.dims;
    if (w < 1) throw ValidationError("ssim3d: window must be >= 1");
    if (d.x < w || d.y < w || d.z < w)
        throw ValidationError("ssim3d: volume smaller than window");

    double range;
    if (params.dynamic_range) {
        range = *params.dynamic_range;
    } else {
        range = double(a.maxValue()) - double(a.minValue());
        if (range <= 0) range = 1.0;
    }
    if (range <= 0) throw ValidationError("ssim3d: dynamic range must be > 0");
    const double c1 = (params.k1 * range) * (params.k1 * range);
    const double c2 = (params.k2 * range) * (params.k2 * range);

    const int nx = d.x, ny = d.y;
    const int ox = nx - w + 1, oy = ny - w + 1, oz = d.z - w + 1;
    const size_t slice = size_t(nx) * ny, oslice = size_t(ox) * oy;

    // ring of w xy-box-summed slices for each of the 5 moment images
    enum { SA, SB, SAA, SBB, SAB, NQ };
    std::vector<std::vector<double>> ring[NQ];
    for (auto& r : ring) r.assign(static_cast<std::size_t>(w), std::vector<double>(oslice));
    std::vector<double> plane(slice), tmp(static_cast<std::size_t>(ox) * ny);

    const double inv_n = 1.0 / (double(w) * w * w);
    double ssim_sum = 0;
    std::int64_t windows = 0;

    for (int k = 0; k < d.z; ++k) {
        const float* pa = a.voxels.data() + size_t(k) * slice;
        const float* pb = b.voxels.data() + size_t(k) * slice;
        const int r = k % w;
        for (int q = 0; q < NQ; ++q) {
            for (size_t i = 0; i < slice; ++i) {
                const double va = pa[i], vb = pb[i];
                plane[i] = q == SA ? va : q == SB ? vb : q == SAA ? va * va
                                     : q == SBB ? vb * vb : va * vb;
            }
            boxSum2d(plane, nx, ny, w, tmp, ring[q][size_t(r)]);
        }
        if (k < w - 1) continue;
        const int k0 = k - w + 1; // output slice index
        (void)k0;
        for (size_t i = 0; i < oslice; ++i) {
            double s[NQ];
            for (int q = 0; q < NQ; ++q) {
                double acc = 0;
                for (int rr = 0; rr < w; ++rr) acc += ring[q][size_t(rr)][i];
                s[q] = acc;
            }
            const double mu_a = s[SA] * inv_n, mu_b = s[SB] * inv_n;
            const double var_a = s[SAA] * inv_n - mu_a * mu_a;
            const double var_b = s[SBB] * inv_n - mu_b * mu_b;
            const double cov = s[SAB] * inv_n - mu_a * mu_b;
            const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            ssim_sum += num / den;
            ++windows;
        }
    }
    (void)oz;
    return ssim_sum / double(windows);
}

namespace {

std::vector<double> averageRanks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (double(i) + double(j)) / 2.0 + 1.0; // 1-based
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

bool hasTies(const std::vector<double>& x) {
    std::vector<double> s = x;
    std::sort(s.begin(), s.end());
    return std::adjacent_find(s.begin(), s.end()) != s.end();
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double sx = 0, sy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / double(n), my = sy / double(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0 || syy <= 0) throw NumericError("spearman: zero rank variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double rankRho(const std::vector<double>& x, const std::vector<double>& y) {
    const std::vector<double> rx = averageRanks(x), ry = averageRanks(y);
    if (!hasTies(x) && !hasTies(y)) {
        // classic formula, exact integer d^2 arithmetic
        const double n = double(x.size());
        double sd2 = 0;
        for (size_t i = 0; i < x.size(); ++i) {
            const double diff = rx[i] - ry[i];
            sd2 += diff * diff;
        }
        return 1.0 - 6.0 * sd2 / (n * (n * n - 1.0));
    }
    return pearson(rx, ry);
}

// regularized incomplete beta, continued fraction (modified Lentz)
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 200;
    constexpr double kEps = 3e-14, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double regularizedIncompleteBeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// two-sided p for Student-t with df degrees of freedom
double studentTwoSidedP(double t, double df) {
    return regularizedIncompleteBeta(df / 2.0, 0.5, df / (df + t * t));
}

} // namespace

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y,
                        bool exact_permutation) {
    if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
    const size_t n = x.size();
    if (n < 3) throw ValidationError("spearman: need at least 3 samples");

    SpearmanResult res;
    res.rho = rankRho(x, y);

    if (exact_permutation) {
        if (n > 10) throw ValidationError("spearman: exact permutation limited to n <= 10");
        std::vector<size_t> perm(n);
        std::iota(perm.begin(), perm.end(), size_t(0));
        std::vector<double> yp(n);
        std::int64_t count = 0, total = 0;
        const double target = std::abs(res.rho) - 1e-12;
        do {
            for (size_t i = 0; i < n; ++i) yp[i] = y[perm[i]];
            if (std::abs(rankRho(x, yp)) >= target) ++count;
            ++total;
        } while (std::next_permutation(perm.begin(), perm.end()));
        res.p_value = double(count) / double(total);
        return res;
    }

    if (std::abs(res.rho) >= 1.0) {
        res.p_value = 0.0;
        return res;
    }
    const double df = double(n) - 2.0;
    const double t = res.rho * std::sqrt(df / (1.0 - res.rho * res.rho));
    res.p_value = studentTwoSidedP(t, df);
    return res;
}

double cohenKappa(const std::vector<int>& r1, const std::vector<int>& r2) {
    if (r1.size() != r2.size()) throw ValidationError("cohen_kappa: length mismatch");
    if (r1.empty()) throw ValidationError("cohen_kappa: empty input");
    std::vector<int> labels;
    for (const auto& v : {r1, r2})
        for (int l : v)
            if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    std::sort(labels.begin(), labels.end());

    // Integer-count form of (po - pe) / (1 - pe): scaling both by n^2 keeps
    // every term an exact integer, so the single final division is the only
    // rounding step (e.g. the 2x2 table [[20,5],[10,15]] yields 500/1250,
    // which is exactly the double 0.4).
    const std::int64_t n = std::int64_t(r1.size());
    std::int64_t agree = 0;
    for (size_t i = 0; i < r1.size(); ++i) agree += r1[i] == r2[i] ? 1 : 0;

    std::int64_t chance = 0; // sum over labels of row_count * col_count
    for (int l : labels) {
        std::int64_t m1 = 0, m2 = 0;
        for (size_t i = 0; i < r1.size(); ++i) {
            m1 += r1[i] == l ? 1 : 0;
            m2 += r2[i] == l ? 1 : 0;
        }
        chance += m1 * m2;
    }
    const std::int64_t den = n * n - chance; // n^2 * (1 - pe)
    if (den == 0) {
        if (agree == n) return 1.0; // both raters constant and identical
        throw NumericError("cohen_kappa: degenerate expected agreement");
    }
    return double(n * agree - chance) / double(den);
}

std::string MetricReport::toJson() const {
    nlohmann::json j{{"ncc", ncc}, {"ssim", ssim}, {"rmse", rmse}, {"dice", dice},
                     {"region", region}};
    return j.dump(2);
}

std::string MetricReport::csvHeader() { return "label,region,ncc,ssim,rmse,dice"; }

std::string MetricReport::toCsvRow(const std::string& label) const {
    std::ostringstream os;
    os.precision(10);
    os << label << ',' << region << ',' << ncc << ',' << ssim << ',' << rmse << ',' << dice;
    return os.str();
}

MetricReport computeMetrics(const Volume& a, const Volume& b, const Mask* lung_a,
                            const Mask* lung_b, const Mask* region,
                            const std::string& region_name) {
    MetricReport r;
    r.ncc = ncc(a, b, region);
    r.ssim = ssim3d(a, b);
    r.rmse = rmse(a, b, region);
    r.dice = (lung_a && lung_b) ? dice(*lung_a, *lung_b)
                                : std::numeric_limits<double>::quiet_NaN();
    r.region = region_name;
    return r;
}

} // namespace ablate
