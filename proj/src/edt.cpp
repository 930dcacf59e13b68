#include "ablate/edt.hpp"

#include <cmath>
#include <limits>

#include "ablate/error.hpp"

namespace ablate {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D lower-envelope distance transform (Felzenszwalb & Huttenlocher):
// out[i] = min_j (f[j] + w * (i - j)^2), with w the squared sample spacing.
void dt1d(const double* f, double* out, int n, double w, std::vector<int>& v,
          std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        double s;
        for (;;) {
            if (f[v[size_t(k)]] == kInf) {
                // previous parabola is at infinity: replace it outright
                --k;
                if (k < 0) break;
                continue;
            }
            const int p = v[size_t(k)];
            s = (f[q] + w * q * q - f[p] - w * p * p) / (2.0 * w * (q - p));
            if (s > z[size_t(k)]) break;
            --k;
            if (k < 0) break;
        }
        ++k;
        v[size_t(k)] = q;
        z[size_t(k)] = k == 0 ? -kInf : s;
        z[size_t(k) + 1] = kInf;
    }
    if (f[v[0]] == kInf) {
        for (int q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[size_t(k) + 1] < q) ++k;
        const int p = v[size_t(k)];
        out[q] = f[p] + w * double(q - p) * double(q - p);
    }
}

} // namespace

std::vector<float> squaredEdt(const Mask& mask) {
    const auto& d = mask.meta.dims;
    const int nx = d.x, ny = d.y, nz = d.z;
    const std::int64_t total = mask.meta.voxelCount();

    std::vector<double> dist(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i)
        dist[size_t(i)] = mask.voxels[size_t(i)] ? 0.0 : kInf;

    const int nmax = std::max({nx, ny, nz});
    std::vector<double> line(static_cast<std::size_t>(nmax)), out(static_cast<std::size_t>(nmax));
    std::vector<int> v(static_cast<std::size_t>(nmax));
    std::vector<double> z(static_cast<std::size_t>(nmax) + 1);

    // x axis
    const double wx = mask.meta.spacing.x * mask.meta.spacing.x;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < ny; ++j) {
            double* row = dist.data() + mask.meta.index(0, j, k);
            dt1d(row, out.data(), nx, wx, v, z);
            std::copy(out.begin(), out.begin() + nx, row);
        }
    // y axis
    const double wy = mask.meta.spacing.y * mask.meta.spacing.y;
    for (int k = 0; k < nz; ++k)
        for (int i = 0; i < nx; ++i) {
            for (int j = 0; j < ny; ++j) line[size_t(j)] = dist[size_t(mask.meta.index(i, j, k))];
            dt1d(line.data(), out.data(), ny, wy, v, z);
            for (int j = 0; j < ny; ++j) dist[size_t(mask.meta.index(i, j, k))] = out[size_t(j)];
        }
    // z axis
    const double wz = mask.meta.spacing.z * mask.meta.spacing.z;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            for (int k = 0; k < nz; ++k) line[size_t(k)] = dist[size_t(mask.meta.index(i, j, k))];
            dt1d(line.data(), out.data(), nz, wz, v, z);
            for (int k = 0; k < nz; ++k) dist[size_t(mask.meta.index(i, j, k))] = out[size_t(k)];
        }

    std::vector<float> result(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i)
        result[size_t(i)] = float(dist[size_t(i)]);
    return result;
}

Mask dilateMask(const Mask& mask, double radius_mm) {
    if (radius_mm < 0) throw ValidationError("dilate: radius must be >= 0");
    if (radius_mm == 0) return mask;
    const auto d2 = squaredEdt(mask);
    const float r2 = float(radius_mm * radius_mm);
    Mask out(mask.meta);
    for (size_t i = 0; i < out.voxels.size(); ++i) out.voxels[i] = d2[i] <= r2 ? 1 : 0;
    return out;
}

Mask dilateMaskBoundary(const Mask& mask, double margin_mm) {
    if (margin_mm < 0) throw ValidationError("dilate: margin must be >= 0");
    if (mask.empty()) throw ValidationError("dilate: empty mask");
    if (margin_mm == 0) return mask;

    const auto& meta = mask.meta;
    const int dims[3] = {meta.dims.x, meta.dims.y, meta.dims.z};
    const double sps[3] = {meta.spacing.x, meta.spacing.y, meta.spacing.z};

    int lo[3] = {dims[0], dims[1], dims[2]}, hi[3] = {-1, -1, -1};
    for (int k = 0; k < dims[2]; ++k)
        for (int j = 0; j < dims[1]; ++j)
            for (int i = 0; i < dims[0]; ++i) {
                if (!mask.voxels[size_t(meta.index(i, j, k))]) continue;
                lo[0] = std::min(lo[0], i);
                lo[1] = std::min(lo[1], j);
                lo[2] = std::min(lo[2], k);
                hi[0] = std::max(hi[0], i);
                hi[1] = std::max(hi[1], j);
                hi[2] = std::max(hi[2], k);
            }

    // Working window: bounding box padded by the margin (plus one voxel) per
    // axis. The window may extend past the volume; such virtual voxels are
    // background, which also yields boundary faces where the mask touches the
    // volume edge.
    int base[3], w[3];
    for (int a = 0; a < 3; ++a) {
        const int pad = int(std::ceil(margin_mm / sps[a])) + 1;
        base[a] = lo[a] - pad;
        w[a] = hi[a] - lo[a] + 1 + 2 * pad;
    }

    // Half-pitch lattice over the window: even indices are voxel centers, odd
    // indices are the face centers between 6-adjacent voxel pairs. The mask
    // boundary (inside/outside interface) is sampled at those face centers and
    // an exact EDT against them gives each voxel center its distance to the
    // boundary.
    GridMeta fine;
    fine.dims = {2 * w[0] - 1, 2 * w[1] - 1, 2 * w[2] - 1};
    fine.spacing = {sps[0] / 2, sps[1] / 2, sps[2] / 2};
    fine.origin = {0, 0, 0};
    Mask seeds(fine);

    auto inside = [&](int i, int j, int k) -> bool {
        if (i < 0 || i >= dims[0] || j < 0 || j >= dims[1] || k < 0 || k >= dims[2]) return false;
        return mask.voxels[size_t(meta.index(i, j, k))] != 0;
    };
    static const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                  {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int lk = 0; lk < w[2]; ++lk)
        for (int lj = 0; lj < w[1]; ++lj)
            for (int li = 0; li < w[0]; ++li) {
                const int gi = base[0] + li, gj = base[1] + lj, gk = base[2] + lk;
                if (!inside(gi, gj, gk)) continue;
                for (const auto& o : off) {
                    if (inside(gi + o[0], gj + o[1], gk + o[2])) continue;
                    seeds.voxels[size_t(
                        fine.index(2 * li + o[0], 2 * lj + o[1], 2 * lk + o[2]))] = 1;
                }
            }

    const auto d2 = squaredEdt(seeds);
    const float m2 = float(margin_mm * margin_mm);
    Mask out = mask;
    for (int lk = 0; lk < w[2]; ++lk)
        for (int lj = 0; lj < w[1]; ++lj)
            for (int li = 0; li < w[0]; ++li) {
                const int gi = base[0] + li, gj = base[1] + lj, gk = base[2] + lk;
                if (gi < 0 || gi >= dims[0] || gj < 0 || gj >= dims[1] || gk < 0 ||
                    gk >= dims[2])
                    continue;
                if (d2[size_t(fine.index(2 * li, 2 * lj, 2 * lk))] <= m2)
                    out.voxels[size_t(meta.index(gi, gj, gk))] = 1;
            }
    return out;
}

Mask erodeMask(const Mask& mask, double radius_mm) {
    if (radius_mm < 0) throw ValidationError("erode: radius must be >= 0");
    if (radius_mm == 0) return mask;
    Mask inv(mask.meta);
    for (size_t i = 0; i < inv.voxels.size(); ++i) inv.voxels[i] = mask.voxels[i] ? 0 : 1;
    const auto d2 = squaredEdt(inv);
    const float r2 = float(radius_mm * radius_mm);
    Mask out(mask.meta);
    for (size_t i = 0; i < out.voxels.size(); ++i) out.voxels[i] = d2[i] > r2 ? 1 : 0;
    return out;
}

Mask closeMask(const Mask& mask, double radius_mm) {
    return erodeMask(dilateMask(mask, radius_mm), radius_mm);
}

} // namespace ablate
