#include "ablate/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "ablate/error.hpp"

namespace ablate {

namespace {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// sequential helper stream for shape parameters (not per-voxel data)
struct ParamStream {
    std::uint64_t state;
    explicit ParamStream(std::uint64_t seed, std::uint64_t salt) : state(mix64(seed ^ mix64(salt))) {}
    double uniform() { // [0,1)
        state = mix64(state);
        return double(state >> 11) * 0x1.0p-53;
    }
};

struct Segment {
    Vec3 a, b;
    double radius;
};

double distToSegment(const Vec3& p, const Segment& s) {
    const Vec3 ab = s.b - s.a;
    const double len2 = ab.dot(ab);
    const double t = len2 > 0 ? std::clamp((p - s.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const Vec3 q = s.a + ab * t;
    return (p - q).norm();
}

// separable 3-tap box ([1,1,1]/3 per axis, clamped ends)
void boxSmooth3(Volume& vol) {
    const Vec3i d = vol.meta.dims;
    std::vector<float> tmp(vol.voxels.size());
    const auto pass = [&](int axis) {
        const int n = axis == 0 ? d.x : axis == 1 ? d.y : d.z;
        for (int k = 0; k < d.z; ++k)
            for (int j = 0; j < d.y; ++j)
                for (int i = 0; i < d.x; ++i) {
                    const int c = axis == 0 ? i : axis == 1 ? j : k;
                    const int lo = std::max(c - 1, 0) - c, hi = std::min(c + 1, n - 1) - c;
                    double sum = 0;
                    for (int s = lo; s <= hi; ++s)
                        sum += vol.at(axis == 0 ? i + s : i, axis == 1 ? j + s : j,
                                      axis == 2 ? k + s : k);
                    tmp[static_cast<std::size_t>(vol.meta.index(i, j, k))] =
                        float(sum / (hi - lo + 1));
                }
        vol.voxels.swap(tmp);
    };
    pass(0);
    pass(1);
    pass(2);
}

} // namespace

double phantomNoise(std::uint64_t seed, std::uint64_t index, std::uint64_t salt) {
    const std::uint64_t h = mix64(mix64(seed ^ mix64(salt)) ^ index);
    return double(h >> 11) * 0x1.0p-52 - 1.0; // [-1, 1)
}

void PhantomConfig::validate() const {
    if (dims.x < 8 || dims.y < 8 || dims.z < 8)
        throw ValidationError("phantom: dims must be at least 8 per axis");
    if (spacing.x <= 0 || spacing.y <= 0 || spacing.z <= 0)
        throw ValidationError("phantom: spacing must be positive");
    if (body_radius_mm <= 0 || tumor_radius_mm <= 0 || vessel_radius_mm <= 0)
        throw ValidationError("phantom: radii must be positive");
    if (lung_semi_axes.x <= 0 || lung_semi_axes.y <= 0 || lung_semi_axes.z <= 0)
        throw ValidationError("phantom: lung semi-axes must be positive");
    // lungs must stay strictly inside the volume so boundary-component
    // removal in segmentation cannot eat them
    const double hx = (dims.x - 1) / 2.0 * spacing.x;
    const double hy = (dims.y - 1) / 2.0 * spacing.y;
    const double hz = (dims.z - 1) / 2.0 * spacing.z;
    if (lung_center_x_mm + lung_semi_axes.x >= hx || lung_semi_axes.y >= hy ||
        lung_semi_axes.z >= hz)
        throw ValidationError("phantom: lungs do not fit inside the volume");
    if (vessels_per_lung < 0) throw ValidationError("phantom: vessels_per_lung must be >= 0");
    if (smooth_passes < 0) throw ValidationError("phantom: smooth_passes must be >= 0");
}

Phantom makePhantom(const PhantomConfig& cfg) {
    cfg.validate();
    GridMeta meta;
    meta.dims = cfg.dims;
    meta.spacing = cfg.spacing;
    meta.origin = {-(cfg.dims.x - 1) / 2.0 * cfg.spacing.x, -(cfg.dims.y - 1) / 2.0 * cfg.spacing.y,
                   -(cfg.dims.z - 1) / 2.0 * cfg.spacing.z};

    const Vec3 lung_c[2] = {{cfg.lung_center_x_mm, 0, 0}, {-cfg.lung_center_x_mm, 0, 0}};
    auto inLung = [&](const Vec3& p, int l) {
        const Vec3 d = p - lung_c[l];
        const double nx = d.x / cfg.lung_semi_axes.x, ny = d.y / cfg.lung_semi_axes.y,
                     nz = d.z / cfg.lung_semi_axes.z;
        return nx * nx + ny * ny + nz * nz <= 1.0;
    };
    const Vec3 tumor_c = lung_c[0] + cfg.tumor_offset_mm;

    // vessel tubes: rays from each lung center, lengths up to the major axis
    std::vector<Segment> vessels;
    for (int l = 0; l < 2; ++l)
        for (int v = 0; v < cfg.vessels_per_lung; ++v) {
            ParamStream rng(cfg.seed, 0x76657373ULL + std::uint64_t(l) * 1000 + std::uint64_t(v));
            Vec3 dir{rng.uniform() * 2 - 1, rng.uniform() * 2 - 1, rng.uniform() * 2 - 1};
            const double n = dir.norm();
            dir = n > 1e-9 ? dir * (1.0 / n) : Vec3{0, 0, 1};
            const double len =
                (0.5 + 0.5 * rng.uniform()) *
                std::max({cfg.lung_semi_axes.x, cfg.lung_semi_axes.y, cfg.lung_semi_axes.z});
            const double rad = cfg.vessel_radius_mm * (0.6 + 0.8 * rng.uniform());
            vessels.push_back({lung_c[l], lung_c[l] + dir * len, rad});
        }

    Phantom ph{Volume(meta, Unit::HU), Mask(meta), Mask(meta)};
    const auto& d = meta.dims;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const std::int64_t vox = meta.index(i, j, k);
                const Vec3 p = meta.worldAt(i, j, k);
                const double noise = phantomNoise(cfg.seed, std::uint64_t(vox), 0x766f78ULL);

                double value;
                if (p.x * p.x + p.y * p.y > cfg.body_radius_mm * cfg.body_radius_mm) {
                    value = cfg.exterior_hu;
                } else {
                    value = cfg.body_hu + cfg.body_noise * noise;
                    const bool lung = inLung(p, 0) || inLung(p, 1);
                    if (lung) {
                        ph.lung.voxels[size_t(vox)] = 1;
                        value = cfg.lung_hu + cfg.lung_noise * noise;
                        for (const auto& s : vessels)
                            if (distToSegment(p, s) <= s.radius) {
                                value = cfg.vessel_hu + cfg.vessel_noise * noise;
                                break;
                            }
                    }
                    if (cfg.with_tumor && (p - tumor_c).norm() <= cfg.tumor_radius_mm) {
                        if (!lung) throw ValidationError("phantom: tumor outside lung");
                        ph.tumor.voxels[size_t(vox)] = 1;
                        value = cfg.tumor_hu + cfg.tumor_noise * noise;
                    }
                }
                ph.volume.voxels[size_t(vox)] = float(value);
            }
    for (int pass = 0; pass < cfg.smooth_passes; ++pass) boxSmooth3(ph.volume);
    return ph;
}

Vec3 SyntheticField::evaluate(const Vec3& world) const {
    Vec3 u{0, 0, 0};
    for (const auto& b : bumps) {
        const Vec3 d = world - b.center_mm;
        const double w = std::exp(-d.dot(d) / (2.0 * b.sigma_mm * b.sigma_mm));
        u = u + b.peak_mm * w;
    }
    return u;
}

SyntheticField SyntheticField::respiratory(double peak_mm, const PhantomConfig& cfg) {
    if (peak_mm < 0) throw ValidationError("synthetic field: peak must be >= 0");
    const double limit = 0.4 * std::min({cfg.lung_semi_axes.x, cfg.lung_semi_axes.y,
                                         cfg.lung_semi_axes.z});
    if (peak_mm >= limit)
        throw ValidationError("synthetic field: peak must stay below 0.4 x lung minor axis");
    // mostly superior-inferior, slight lateral/AP components
    const Vec3 dir{0.15, 0.10, 1.0};
    const Vec3 unit = dir * (1.0 / dir.norm());
    SyntheticField f;
    f.bumps.push_back({{cfg.lung_center_x_mm, 0, -10}, unit * peak_mm, 25.0});
    f.bumps.push_back({{-cfg.lung_center_x_mm, 0, -10}, unit * (0.9 * peak_mm), 25.0});
    return f;
}

std::pair<Volume, DisplacementField> applySyntheticField(const Volume& vol,
                                                         const SyntheticField& f) {
    DisplacementField field = DisplacementField::zero(vol.meta);
    Volume out(vol.meta, vol.unit);
    const double fill = vol.minValue();
    const auto& d = vol.meta.dims;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const Vec3 x = vol.meta.worldAt(i, j, k);
                const Vec3 u = f.evaluate(x);
                field.set(i, j, k, u);
                const Vec3 src = x + u;
                const Vec3 idx{(src.x - vol.meta.origin.x) / vol.meta.spacing.x,
                               (src.y - vol.meta.origin.y) / vol.meta.spacing.y,
                               (src.z - vol.meta.origin.z) / vol.meta.spacing.z};
                out.voxels[size_t(vol.meta.index(i, j, k))] =
                    float(sampleTrilinearIndex(vol, idx, fill));
            }
    return {std::move(out), std::move(field)};
}

std::pair<Volume, Mask> simulateAblation(const Volume& vol, const Mask& tumor,
                                         const AblationSpec& spec) {
    requireSameGrid(vol.meta, tumor.meta, "simulate_ablation");
    if (spec.zone_radius_mm <= 0)
        throw ValidationError("simulate_ablation: zone_radius must be > 0");
    if (spec.blend_mm < 0) throw ValidationError("simulate_ablation: blend must be >= 0");
    if (tumor.empty()) throw ValidationError("simulate_ablation: empty tumor mask");

    // centroid of the tumor mask in world coordinates
    double sx = 0, sy = 0, sz = 0;
    std::int64_t n = 0;
    const auto& d = vol.meta.dims;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                if (!tumor.voxels[size_t(vol.meta.index(i, j, k))]) continue;
                const Vec3 p = vol.meta.worldAt(i, j, k);
                sx += p.x;
                sy += p.y;
                sz += p.z;
                ++n;
            }
    const Vec3 center = Vec3{sx / n, sy / n, sz / n} + spec.center_offset_mm;

    Volume out = vol;
    Mask treatment(vol.meta);
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const std::int64_t vox = vol.meta.index(i, j, k);
                const double dist = (vol.meta.worldAt(i, j, k) - center).norm();
                if (dist <= spec.zone_radius_mm) treatment.voxels[size_t(vox)] = 1;
                const double w =
                    spec.blend_mm > 0
                        ? std::clamp((spec.zone_radius_mm + spec.blend_mm - dist) / spec.blend_mm,
                                     0.0, 1.0)
                        : (dist <= spec.zone_radius_mm ? 1.0 : 0.0);
                if (w > 0)
                    out.voxels[size_t(vox)] =
                        float(w * spec.hu + (1.0 - w) * double(out.voxels[size_t(vox)]));
            }
    return {std::move(out), std::move(treatment)};
}

} // namespace ablate
