#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "ablate/error.hpp"
#include "ablate/geometry.hpp"

namespace ablate {

// Voxel (i,j,k) is centered at origin + (i*sx, j*sy, k*sz) in world mm.
// World axes are aligned with voxel axes; oblique geometries are rejected at load.
struct GridMeta {
    Vec3i dims{1, 1, 1};     // voxel counts, x/y/z
    Vec3 spacing{1, 1, 1};   // mm per voxel
    Vec3 origin{0, 0, 0};    // world mm of voxel (0,0,0) center

    void validate() const {
        if (dims.x < 1 || dims.y < 1 || dims.z < 1)
            throw ValidationError("grid dims must be >= 1");
        if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0))
            throw ValidationError("grid spacing must be > 0");
    }

    std::int64_t voxelCount() const { return dims.product(); }
    double voxelVolumeMm3() const { return spacing.x * spacing.y * spacing.z; }

    std::int64_t index(int i, int j, int k) const {
        return (std::int64_t(k) * dims.y + j) * dims.x + i;
    }
    bool contains(int i, int j, int k) const {
        return i >= 0 && i < dims.x && j >= 0 && j < dims.y && k >= 0 && k < dims.z;
    }

    Vec3 worldAt(int i, int j, int k) const {
        return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
    }
    Vec3 worldAt(const Vec3& idx) const {
        return {origin.x + idx.x * spacing.x, origin.y + idx.y * spacing.y,
                origin.z + idx.z * spacing.z};
    }
    // continuous voxel coordinate of a world point
    Vec3 indexAt(const Vec3& world) const {
        return {(world.x - origin.x) / spacing.x, (world.y - origin.y) / spacing.y,
                (world.z - origin.z) / spacing.z};
    }
    Vec3 worldCenter() const {
        return worldAt(Vec3{(dims.x - 1) / 2.0, (dims.y - 1) / 2.0, (dims.z - 1) / 2.0});
    }

    bool operator==(const GridMeta& o) const = default;
};

enum class Unit { HU, Normalized };

inline const char* unitName(Unit u) { return u == Unit::HU ? "HU" : "normalized" ; }

// Immutable-by-convention 3D scalar grid; voxels row-major, x fastest.
struct Volume {
    GridMeta meta;
    Unit unit = Unit::HU;
    std::vector<float> voxels;

    Volume() = default;
    // zero-filled
    Volume(const GridMeta& m, Unit u) : meta(m), unit(u) {
        meta.validate();
        voxels.assign(static_cast<std::size_t>(meta.voxelCount()), 0.0f);
    }
    Volume(GridMeta m, Unit u, std::vector<float> v) : meta(m), unit(u), voxels(std::move(v)) {
        meta.validate();
        if (std::int64_t(voxels.size()) != meta.voxelCount())
            throw ValidationError("voxel array length does not match dims");
    }
    static Volume filled(GridMeta m, Unit u, float value) {
        m.validate();
        return Volume(m, u, std::vector<float>(size_t(m.voxelCount()), value));
    }

    float at(int i, int j, int k) const { return voxels[size_t(meta.index(i, j, k))]; }
    float& at(int i, int j, int k) { return voxels[size_t(meta.index(i, j, k))]; }

    float minValue() const;
    float maxValue() const;
};

// Binary volume on the same grid model; values are 0/1 only.
struct Mask {
    GridMeta meta;
    std::vector<std::uint8_t> voxels;

    Mask() = default;
    // zero-filled
    explicit Mask(const GridMeta& m) : meta(m) {
        meta.validate();
        voxels.assign(static_cast<std::size_t>(meta.voxelCount()), std::uint8_t(0));
    }
    Mask(GridMeta m, std::vector<std::uint8_t> v) : meta(m), voxels(std::move(v)) {
        meta.validate();
        if (std::int64_t(voxels.size()) != meta.voxelCount())
            throw ValidationError("mask array length does not match dims");
        for (auto b : voxels)
            if (b > 1) throw ValidationError("mask values must be 0 or 1");
    }
    static Mask filled(GridMeta m, std::uint8_t value) {
        m.validate();
        return Mask(m, std::vector<std::uint8_t>(size_t(m.voxelCount()), value));
    }

    std::uint8_t at(int i, int j, int k) const { return voxels[size_t(meta.index(i, j, k))]; }
    std::uint8_t& at(int i, int j, int k) { return voxels[size_t(meta.index(i, j, k))]; }

    std::int64_t count() const;
    double volumeMm3() const { return double(count()) * meta.voxelVolumeMm3(); }
    bool empty() const { return count() == 0; }
};

// Dense per-voxel displacement in mm, 3 floats per voxel (ux,uy,uz), x fastest.
struct DisplacementField {
    GridMeta meta;
    std::vector<float> vectors;

    DisplacementField() = default;
    DisplacementField(GridMeta m, std::vector<float> v) : meta(m), vectors(std::move(v)) {
        meta.validate();
        if (std::int64_t(vectors.size()) != meta.voxelCount() * 3)
            throw ValidationError("displacement array length does not match dims*3");
    }
    static DisplacementField zero(GridMeta m) {
        m.validate();
        return DisplacementField(m, std::vector<float>(size_t(m.voxelCount()) * 3, 0.0f));
    }

    Vec3 at(int i, int j, int k) const {
        const size_t b = size_t(meta.index(i, j, k)) * 3;
        return {vectors[b], vectors[b + 1], vectors[b + 2]};
    }
    void set(int i, int j, int k, const Vec3& u) {
        const size_t b = size_t(meta.index(i, j, k)) * 3;
        vectors[b] = float(u.x);
        vectors[b + 1] = float(u.y);
        vectors[b + 2] = float(u.z);
    }
};

void requireSameGrid(const GridMeta& a, const GridMeta& b, const char* what);

enum class Interp { Trilinear, Nearest };

// Resamples onto target_spacing; output dims = round(physical extent / spacing),
// min 1 per axis; origin preserved.
Volume resample(const Volume& vol, const Vec3& target_spacing, Interp mode);
Mask resampleMask(const Mask& mask, const Vec3& target_spacing);

// Nearest-neighbor resample of a mask onto an explicit target grid.
Mask resampleMaskToGrid(const Mask& mask, const GridMeta& target);

// Symmetric centered crop/pad to target_dims; excess split floor(lo)/ceil(hi);
// padded voxels take `fill`; origin moves so retained voxels keep world coords.
Volume cropOrPad(const Volume& vol, const Vec3i& target_dims, float fill);
Mask cropOrPadMask(const Mask& mask, const Vec3i& target_dims);

// With a window (lo,hi): v' = clamp((v-lo)/(hi-lo), 0, 1). Without: min-max
// over the volume; a constant volume maps to all zeros.
Volume normalize(const Volume& vol, std::optional<std::pair<float, float>> window);

// Default CT display/normalization window.
inline constexpr std::pair<float, float> kDefaultHuWindow{-1000.0f, 400.0f};

// Trilinear sample at a world point; outside the grid returns `outside`
// (callers default it to the volume minimum).
double sampleTrilinear(const Volume& vol, const Vec3& world, double outside);
double sampleNearest(const Volume& vol, const Vec3& world, double outside);

// Same, addressed in continuous voxel coordinates.
double sampleTrilinearIndex(const Volume& vol, const Vec3& idx, double outside);
double sampleNearestIndex(const Volume& vol, const Vec3& idx, double outside);

} // namespace ablate
