#include "ablate/volume.hpp"

#include <algorithm>
#include <cmath>

namespace ablate {

float Volume::minValue() const {
    float m = voxels.empty() ? 0.0f : voxels[0];
    for (float v : voxels) m = std::min(m, v);
    return m;
}

float Volume::maxValue() const {
    float m = voxels.empty() ? 0.0f : voxels[0];
    for (float v : voxels) m = std::max(m, v);
    return m;
}

std::int64_t Mask::count() const {
    std::int64_t n = 0;
    for (auto b : voxels) n += b;
    return n;
}

void requireSameGrid(const GridMeta& a, const GridMeta& b, const char* what) {
    if (!(a == b)) throw ValidationError(std::string("grid mismatch in ") + what);
}

namespace {

Vec3i targetDimsFor(const GridMeta& meta, const Vec3& ts) {
    if (!(ts.x > 0 && ts.y > 0 && ts.z > 0))
        throw ValidationError("target spacing must be > 0");
    Vec3i d;
    for (int a = 0; a < 3; ++a) {
        const double extent = meta.dims[a] * meta.spacing[a];
        d[a] = std::max(1, int(std::llround(extent / ts[a])));
    }
    return d;
}

} // namespace

Volume resample(const Volume& vol, const Vec3& target_spacing, Interp mode) {
    const GridMeta out_meta{targetDimsFor(vol.meta, target_spacing), target_spacing,
                            vol.meta.origin};
    if (out_meta.dims == vol.meta.dims && target_spacing == vol.meta.spacing) return vol;

    Volume out = Volume::filled(out_meta, vol.unit, 0.0f);
    const double outside = vol.minValue();
    for (int k = 0; k < out_meta.dims.z; ++k)
        for (int j = 0; j < out_meta.dims.y; ++j)
            for (int i = 0; i < out_meta.dims.x; ++i) {
                const Vec3 w = out_meta.worldAt(i, j, k);
                const double v = mode == Interp::Trilinear ? sampleTrilinear(vol, w, outside)
                                                           : sampleNearest(vol, w, outside);
                out.at(i, j, k) = float(v);
            }
    return out;
}

Mask resampleMask(const Mask& mask, const Vec3& target_spacing) {
    const GridMeta out_meta{targetDimsFor(mask.meta, target_spacing), target_spacing,
                            mask.meta.origin};
    return resampleMaskToGrid(mask, out_meta);
}

Mask resampleMaskToGrid(const Mask& mask, const GridMeta& target) {
    if (mask.meta == target) return mask;
    Mask out = Mask::filled(target, 0);
    for (int k = 0; k < target.dims.z; ++k)
        for (int j = 0; j < target.dims.y; ++j)
            for (int i = 0; i < target.dims.x; ++i) {
                const Vec3 idx = mask.meta.indexAt(target.worldAt(i, j, k));
                const int si = int(std::llround(idx.x));
                const int sj = int(std::llround(idx.y));
                const int sk = int(std::llround(idx.z));
                if (mask.meta.contains(si, sj, sk)) out.at(i, j, k) = mask.at(si, sj, sk);
            }
    return out;
}

namespace {

// Start index of the retained block in the source, per axis; negative start
// means padding below. Truncation toward zero gives the floor(lo)/ceil(hi)
// split for both crop and pad.
int cropStart(int src, int dst) { return (src - dst) / 2; }

} // namespace

Volume cropOrPad(const Volume& vol, const Vec3i& target_dims, float fill) {
    if (target_dims.x < 1 || target_dims.y < 1 || target_dims.z < 1)
        throw ValidationError("target dims must be >= 1");
    if (target_dims == vol.meta.dims) return vol;

    Vec3i start;
    for (int a = 0; a < 3; ++a) start[a] = cropStart(vol.meta.dims[a], target_dims[a]);

    GridMeta out_meta{target_dims, vol.meta.spacing,
                      {vol.meta.origin.x + start.x * vol.meta.spacing.x,
                       vol.meta.origin.y + start.y * vol.meta.spacing.y,
                       vol.meta.origin.z + start.z * vol.meta.spacing.z}};
    Volume out = Volume::filled(out_meta, vol.unit, fill);
    for (int k = 0; k < target_dims.z; ++k) {
        const int sk = k + start.z;
        if (sk < 0 || sk >= vol.meta.dims.z) continue;
        for (int j = 0; j < target_dims.y; ++j) {
            const int sj = j + start.y;
            if (sj < 0 || sj >= vol.meta.dims.y) continue;
            for (int i = 0; i < target_dims.x; ++i) {
                const int si = i + start.x;
                if (si < 0 || si >= vol.meta.dims.x) continue;
                out.at(i, j, k) = vol.at(si, sj, sk);
            }
        }
    }
    return out;
}

Mask cropOrPadMask(const Mask& mask, const Vec3i& target_dims) {
    Volume tmp(mask.meta, Unit::Normalized,
               std::vector<float>(mask.voxels.begin(), mask.voxels.end()));
    Volume cropped = cropOrPad(tmp, target_dims, 0.0f);
    std::vector<std::uint8_t> bin(cropped.voxels.size());
    for (size_t i = 0; i < bin.size(); ++i) bin[i] = cropped.voxels[i] != 0.0f ? 1 : 0;
    return Mask(cropped.meta, std::move(bin));
}

Volume normalize(const Volume& vol, std::optional<std::pair<float, float>> window) {
    float lo, hi;
    if (window) {
        lo = window->first;
        hi = window->second;
        if (!(lo < hi)) throw ValidationError("normalization window requires low < high");
    } else {
        lo = vol.minValue();
        hi = vol.maxValue();
    }
    Volume out = vol;
    out.unit = Unit::Normalized;
    if (lo >= hi) { // constant volume without window
        std::fill(out.voxels.begin(), out.voxels.end(), 0.0f);
        return out;
    }
    const float inv = 1.0f / (hi - lo);
    for (auto& v : out.voxels) v = std::clamp((v - lo) * inv, 0.0f, 1.0f);
    return out;
}

double sampleTrilinearIndex(const Volume& vol, const Vec3& idx, double outside) {
    const auto& d = vol.meta.dims;
    if (idx.x < 0 || idx.y < 0 || idx.z < 0 || idx.x > d.x - 1 || idx.y > d.y - 1 ||
        idx.z > d.z - 1)
        return outside;
    int i0 = int(idx.x), j0 = int(idx.y), k0 = int(idx.z);
    i0 = std::min(i0, d.x - 1);
    j0 = std::min(j0, d.y - 1);
    k0 = std::min(k0, d.z - 1);
    const int i1 = std::min(i0 + 1, d.x - 1);
    const int j1 = std::min(j0 + 1, d.y - 1);
    const int k1 = std::min(k0 + 1, d.z - 1);
    const double fx = idx.x - i0, fy = idx.y - j0, fz = idx.z - k0;

    const double c000 = vol.at(i0, j0, k0), c100 = vol.at(i1, j0, k0);
    const double c010 = vol.at(i0, j1, k0), c110 = vol.at(i1, j1, k0);
    const double c001 = vol.at(i0, j0, k1), c101 = vol.at(i1, j0, k1);
    const double c011 = vol.at(i0, j1, k1), c111 = vol.at(i1, j1, k1);

    const double c00 = c000 + (c100 - c000) * fx;
    const double c10 = c010 + (c110 - c010) * fx;
    const double c01 = c001 + (c101 - c001) * fx;
    const double c11 = c011 + (c111 - c011) * fx;
    const double c0 = c00 + (c10 - c00) * fy;
    const double c1 = c01 + (c11 - c01) * fy;
    return c0 + (c1 - c0) * fz;
}

double sampleNearestIndex(const Volume& vol, const Vec3& idx, double outside) {
    const auto& d = vol.meta.dims;
    if (idx.x < 0 || idx.y < 0 || idx.z < 0 || idx.x > d.x - 1 || idx.y > d.y - 1 ||
        idx.z > d.z - 1)
        return outside;
    const int i = std::clamp(int(std::llround(idx.x)), 0, d.x - 1);
    const int j = std::clamp(int(std::llround(idx.y)), 0, d.y - 1);
    const int k = std::clamp(int(std::llround(idx.z)), 0, d.z - 1);
    return vol.at(i, j, k);
}

double sampleTrilinear(const Volume& vol, const Vec3& world, double outside) {
    return sampleTrilinearIndex(vol, vol.meta.indexAt(world), outside);
}

double sampleNearest(const Volume& vol, const Vec3& world, double outside) {
    return sampleNearestIndex(vol, vol.meta.indexAt(world), outside);
}

} // namespace ablate
