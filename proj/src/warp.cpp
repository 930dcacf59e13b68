#include "ablate/warp.hpp"

#include <cmath>

#include "ablate/error.hpp"

namespace ablate {

namespace {

bool fieldIsZero(const DisplacementField& f) {
    for (const float v : f.vectors)
        if (v != 0.0f) return false;
    return true;
}

// world target of the composite pull map for the fixed-grid voxel (i,j,k)
inline Vec3 pullPoint(const CompositeTransform& T, int i, int j, int k) {
    const Vec3 x = T.field.meta.worldAt(i, j, k);
    return T.rigid.applyInverse(x + T.field.at(i, j, k));
}

// continuous voxel coordinates of a world point on vol's grid, with
// almost-integer snapping so exact-voxel maps copy values bit-for-bit
inline Vec3 toIndex(const GridMeta& m, const Vec3& p) {
    Vec3 idx{(p.x - m.origin.x) / m.spacing.x, (p.y - m.origin.y) / m.spacing.y,
             (p.z - m.origin.z) / m.spacing.z};
    for (double* c : {&idx.x, &idx.y, &idx.z})
        if (std::abs(*c - std::round(*c)) < 1e-7) *c = std::round(*c);
    return idx;
}

} // namespace

Volume applyComposite(const Volume& vol, const CompositeTransform& T, Interp mode) {
    T.rigid.validate();
    if (T.rigid.isIdentity() && vol.meta == T.field.meta && fieldIsZero(T.field)) return vol;

    Volume out(T.field.meta, vol.unit);
    const double fill = vol.minValue();
    const auto& d = out.meta.dims;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const Vec3 idx = toIndex(vol.meta, pullPoint(T, i, j, k));
                const double v = mode == Interp::Trilinear ? sampleTrilinearIndex(vol, idx, fill)
                                                           : sampleNearestIndex(vol, idx, fill);
                out.voxels[size_t(out.meta.index(i, j, k))] = float(v);
            }
    return out;
}

Mask warpMask(const Mask& mask, const CompositeTransform& T) {
    T.rigid.validate();
    if (T.rigid.isIdentity() && mask.meta == T.field.meta && fieldIsZero(T.field)) return mask;

    Mask out(T.field.meta);
    const auto& d = out.meta.dims;
    const auto& mm = mask.meta;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const Vec3 idx = toIndex(mm, pullPoint(T, i, j, k));
                const long ii = std::lround(idx.x), jj = std::lround(idx.y),
                           kk = std::lround(idx.z);
                std::uint8_t v = 0;
                if (ii >= 0 && ii < mm.dims.x && jj >= 0 && jj < mm.dims.y && kk >= 0 &&
                    kk < mm.dims.z)
                    v = mask.voxels[size_t(mm.index(int(ii), int(jj), int(kk)))];
                out.voxels[size_t(out.meta.index(i, j, k))] = v;
            }
    return out;
}

} // namespace ablate
