#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ablate/volume.hpp"

namespace ablate {

// Deterministic synthetic chest CT: exterior air, body cylinder, two
// ellipsoidal lungs with pseudo-random vessel tubes, optional tumor sphere.
// Noise is keyed by (seed, voxel index) so identical configs reproduce
// identical bytes regardless of evaluation order or thread count.
struct PhantomConfig {
    std::uint64_t seed = 17;
    Vec3i dims{96, 96, 96};
    Vec3 spacing{1.25, 1.25, 1.25}; // mm, volume centered on the world origin

    double body_radius_mm = 50.0;   // cylinder along z
    double exterior_hu = -1000.0;
    double body_hu = 0.0, body_noise = 20.0;

    Vec3 lung_semi_axes{22.0, 30.0, 42.0}; // mm
    double lung_center_x_mm = 24.0;        // lungs at (+x, -x, 0, 0)
    double lung_hu = -800.0, lung_noise = 30.0;

    int vessels_per_lung = 12;
    double vessel_radius_mm = 2.0;
    double vessel_hu = 50.0, vessel_noise = 10.0;

    bool with_tumor = true;
    Vec3 tumor_offset_mm{0.0, 6.0, 8.0}; // relative to the right lung center
    double tumor_radius_mm = 10.0;
    double tumor_hu = 30.0, tumor_noise = 10.0;

    // 3^3 box-smoothing passes over the stamped volume (scanner PSF analog);
    // without it, interpolation error at the crisp synthetic edges dominates
    // any intensity comparison between resampled copies. Masks stay analytic.
    int smooth_passes = 0;

    void validate() const;
};

struct Phantom {
    Volume volume; // HU
    Mask lung;     // analytic ellipsoid membership
    Mask tumor;    // analytic sphere membership (empty when disabled)
};

Phantom makePhantom(const PhantomConfig& cfg);

// index-keyed uniform noise in [-1, 1); the generator constants are fixed so
// any reimplementation reproduces phantoms bit-for-bit
double phantomNoise(std::uint64_t seed, std::uint64_t index, std::uint64_t salt);

// Smooth synthetic deformation: a sum of Gaussian displacement bumps.
struct GaussianBump {
    Vec3 center_mm;
    Vec3 peak_mm;
    double sigma_mm;
};

struct SyntheticField {
    std::vector<GaussianBump> bumps;

    Vec3 evaluate(const Vec3& world) const;

    // breathing-like preset: one bump per lung with a dominant
    // superior-inferior component; |peak| = peak_mm
    static SyntheticField respiratory(double peak_mm, const PhantomConfig& cfg);
};

// Pull-deform vol by the field (output voxel x reads vol at x + u(x)) and
// return the dense ground-truth field evaluated at voxel centers.
std::pair<Volume, DisplacementField> applySyntheticField(const Volume& vol,
                                                         const SyntheticField& f);

// Spherical ablation zone stamped over the volume: interior set to `hu` with
// a smooth blend_mm shoulder; treatment mask is the analytic sphere. The
// center is the tumor centroid plus center_offset_mm (offsets create
// under-ablation cases).
struct AblationSpec {
    Vec3 center_offset_mm{0, 0, 0};
    double zone_radius_mm = 15.0;
    double hu = -150.0;
    double blend_mm = 2.0;
};

std::pair<Volume, Mask> simulateAblation(const Volume& vol, const Mask& tumor,
                                         const AblationSpec& spec);

} // namespace ablate
