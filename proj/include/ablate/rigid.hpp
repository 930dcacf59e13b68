#pragma once

#include <string>

#include "ablate/geometry.hpp"
#include "ablate/volume.hpp"

namespace ablate {

// Rigid pose: x -> R (x - center) + center + t, all in world mm.
struct RigidTransform {
    Mat3 rotation = Mat3::identity();
    Vec3 translation{0, 0, 0};
    Vec3 center{0, 0, 0};

    void validate() const; // orthonormality + det(R) = +1 within 1e-6
    bool isIdentity() const;

    Vec3 apply(const Vec3& x) const;
    Vec3 applyInverse(const Vec3& x) const;
    RigidTransform inverse() const;

    std::string toJson() const;
    static RigidTransform fromJson(const std::string& text);
};

struct RigidRegConfig {
    int pyramid_levels = 3;        // x2 downsample per level
    int max_iters_per_level = 100; // pattern-search sweeps
    double init_step_rot = 0.05;   // radians
    double init_step_trans = 4.0;  // mm
    double step_shrink = 0.5;
    double converge_tol = 1e-5;    // NCC delta

    void validate() const;
};

struct RigidResult {
    RigidTransform transform;
    double final_ncc = 0;    // masked NCC of the returned pose at full resolution
    double identity_ncc = 0; // masked NCC of the identity pose, for audit
};

// Maximize NCC(applyRigid(moving, T), fixed) over Euler z-y-x angles about the
// fixed volume's center plus translation; derivative-free coordinate descent
// with shrinking steps over a coarse-to-fine pyramid. `region` restricts the
// similarity (e.g. union of lung masks); whole grid when null. The returned
// pose never scores below the identity pose.
RigidResult registerRigid(const Volume& moving, const Volume& fixed, const RigidRegConfig& cfg = {},
                          const Mask* region = nullptr);

// Pull resampling: output voxel at world x takes vol sampled at T^-1(x).
// Output grid equals the input grid; outside samples use vol's minimum value.
Volume applyRigid(const Volume& vol, const RigidTransform& T, Interp mode = Interp::Trilinear);

} // namespace ablate
