#include "ablate/rigid.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "ablate/error.hpp"

namespace ablate {

void RigidTransform::validate() const {
    if (rotation.orthonormalityError() >= 1e-6)
        throw ValidationError("rigid transform: rotation not orthonormal");
    if (std::abs(rotation.det() - 1.0) >= 1e-6)
        throw ValidationError("rigid transform: rotation determinant must be +1");
}

bool RigidTransform::isIdentity() const {
    const Mat3 id = Mat3::identity();
    for (int i = 0; i < 9; ++i)
        if (rotation.m[size_t(i)] != id.m[size_t(i)]) return false;
    return translation.x == 0 && translation.y == 0 && translation.z == 0;
}

Vec3 RigidTransform::apply(const Vec3& x) const {
    return rotation * (x - center) + center + translation;
}

Vec3 RigidTransform::applyInverse(const Vec3& x) const {
    return rotation.transposed() * (x - center - translation) + center;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transposed();
    inv.center = center;
    // R^T (x - c - t) + c  ==  R^T (x - c) + c + t'  with  t' = -R^T t
    inv.translation = (inv.rotation * translation) * -1.0;
    return inv;
}

std::string RigidTransform::toJson() const {
    nlohmann::json j;
    j["rotation"] = rotation.m;
    j["translation"] = {translation.x, translation.y, translation.z};
    j["center"] = {center.x, center.y, center.z};
    return j.dump(2);
}

RigidTransform RigidTransform::fromJson(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("rigid transform JSON: ") + e.what());
    }
    if (!j.contains("rotation") || !j.contains("translation") || !j.contains("center") ||
        j["rotation"].size() != 9 || j["translation"].size() != 3 || j["center"].size() != 3)
        throw ValidationError("rigid transform JSON: need rotation[9], translation[3], center[3]");
    RigidTransform t;
    for (int i = 0; i < 9; ++i) t.rotation.m[size_t(i)] = j["rotation"][size_t(i)].get<double>();
    t.translation = {j["translation"][0].get<double>(), j["translation"][1].get<double>(),
                     j["translation"][2].get<double>()};
    t.center = {j["center"][0].get<double>(), j["center"][1].get<double>(),
                j["center"][2].get<double>()};
    t.validate();
    return t;
}

void RigidRegConfig::validate() const {
    if (pyramid_levels < 1) throw ValidationError("rigid config: pyramid_levels must be >= 1");
    if (max_iters_per_level <= 0 || init_step_rot <= 0 || init_step_trans <= 0 ||
        step_shrink <= 0 || step_shrink >= 1 || converge_tol <= 0)
        throw ValidationError("rigid config: all parameters must be positive (shrink in (0,1))");
}

Volume applyRigid(const Volume& vol, const RigidTransform& T, Interp mode) {
    T.validate();
    if (T.isIdentity()) return vol;
    Volume out(vol.meta, vol.unit);
    const double fill = vol.minValue();
    const auto& d = vol.meta.dims;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const Vec3 src = T.applyInverse(vol.meta.worldAt(i, j, k));
                Vec3 idx{(src.x - vol.meta.origin.x) / vol.meta.spacing.x,
                         (src.y - vol.meta.origin.y) / vol.meta.spacing.y,
                         (src.z - vol.meta.origin.z) / vol.meta.spacing.z};
                // snap almost-integer coordinates so exact-voxel shifts copy values
                for (double* c : {&idx.x, &idx.y, &idx.z})
                    if (std::abs(*c - std::round(*c)) < 1e-7) *c = std::round(*c);
                const double v = mode == Interp::Trilinear ? sampleTrilinearIndex(vol, idx, fill)
                                                           : sampleNearestIndex(vol, idx, fill);
                out.voxels[size_t(out.meta.index(i, j, k))] = float(v);
            }
    return out;
}

namespace {

// 3^3 box prefilter + even-index subsample (x2 per axis)
Volume downsample2x(const Volume& v) {
    const auto& d = v.meta.dims;
    GridMeta meta;
    meta.dims = {(d.x + 1) / 2, (d.y + 1) / 2, (d.z + 1) / 2};
    meta.spacing = v.meta.spacing * 2.0;
    meta.origin = v.meta.origin;
    Volume out(meta, v.unit);
    for (int k = 0; k < meta.dims.z; ++k)
        for (int j = 0; j < meta.dims.y; ++j)
            for (int i = 0; i < meta.dims.x; ++i) {
                double sum = 0;
                int n = 0;
                for (int dk = -1; dk <= 1; ++dk)
                    for (int dj = -1; dj <= 1; ++dj)
                        for (int di = -1; di <= 1; ++di) {
                            const int fi = std::clamp(2 * i + di, 0, d.x - 1);
                            const int fj = std::clamp(2 * j + dj, 0, d.y - 1);
                            const int fk = std::clamp(2 * k + dk, 0, d.z - 1);
                            sum += v.voxels[size_t(v.meta.index(fi, fj, fk))];
                            ++n;
                        }
                out.voxels[size_t(meta.index(i, j, k))] = float(sum / n);
            }
    return out;
}

// union over the 2x2x2 block keeps thin regions alive at coarse levels
Mask downsampleMask2x(const Mask& m) {
    const auto& d = m.meta.dims;
    GridMeta meta;
    meta.dims = {(d.x + 1) / 2, (d.y + 1) / 2, (d.z + 1) / 2};
    meta.spacing = m.meta.spacing * 2.0;
    meta.origin = m.meta.origin;
    Mask out(meta);
    for (int k = 0; k < meta.dims.z; ++k)
        for (int j = 0; j < meta.dims.y; ++j)
            for (int i = 0; i < meta.dims.x; ++i) {
                std::uint8_t v = 0;
                for (int dk = 0; dk <= 1 && !v; ++dk)
                    for (int dj = 0; dj <= 1 && !v; ++dj)
                        for (int di = 0; di <= 1 && !v; ++di) {
                            const int fi = 2 * i + di, fj = 2 * j + dj, fk = 2 * k + dk;
                            if (fi < d.x && fj < d.y && fk < d.z)
                                v = m.voxels[size_t(m.meta.index(fi, fj, fk))];
                        }
                out.voxels[size_t(meta.index(i, j, k))] = v;
            }
    return out;
}

// Masked NCC against a fixed image whose region values are pre-centered; only
// the moving side is resampled per pose.
class LevelEval {
  public:
    LevelEval(const Volume& fixed, const Volume& moving, const Mask* region, const Vec3& center)
        : moving_(moving), center_(center), moving_fill_(moving.minValue()) {
        const auto& d = fixed.meta.dims;
        double sum = 0;
        for (int k = 0; k < d.z; ++k)
            for (int j = 0; j < d.y; ++j)
                for (int i = 0; i < d.x; ++i) {
                    const auto idx = size_t(fixed.meta.index(i, j, k));
                    if (region && !region->voxels[idx]) continue;
                    world_.push_back(fixed.meta.worldAt(i, j, k));
                    da_.push_back(fixed.voxels[idx]);
                    sum += fixed.voxels[idx];
                }
        if (world_.empty()) throw ValidationError("rigid registration: empty region");
        const double mean = sum / double(da_.size());
        saa_ = 0;
        sda_ = 0;
        for (auto& v : da_) {
            v -= mean;
            saa_ += double(v) * v;
            sda_ += v;
        }
    }

    double fixedVariance() const { return saa_ / double(da_.size()); }

    double operator()(const RigidTransform& T) const {
        double sb = 0, sbb = 0, sdab = 0;
        const Mat3 rt = T.rotation.transposed();
        const auto& mm = moving_.meta;
        for (size_t s = 0; s < world_.size(); ++s) {
            // inline applyInverse: rt * (x - center - t) + center
            const Vec3 src = rt * (world_[s] - center_ - T.translation) + center_;
            Vec3 idx{(src.x - mm.origin.x) / mm.spacing.x, (src.y - mm.origin.y) / mm.spacing.y,
                     (src.z - mm.origin.z) / mm.spacing.z};
            const double b = sampleTrilinearIndex(moving_, idx, moving_fill_);
            sb += b;
            sbb += b * b;
            sdab += double(da_[s]) * b;
        }
        const double n = double(world_.size());
        const double mb = sb / n;
        const double cov = sdab - mb * sda_;
        const double var_b = sbb - n * mb * mb;
        if (saa_ <= 0 || var_b <= 0) return 0;
        return cov / std::sqrt(saa_ * var_b);
    }

  private:
    const Volume& moving_;
    Vec3 center_;
    double moving_fill_;
    std::vector<Vec3> world_;
    std::vector<double> da_; // centered fixed values
    double saa_ = 0, sda_ = 0;
};

struct Pose {
    // rz, ry, rx (radians), tx, ty, tz (mm)
    std::array<double, 6> p{0, 0, 0, 0, 0, 0};
};

RigidTransform poseToTransform(const Pose& pose, const Vec3& center) {
    RigidTransform t;
    t.rotation = Mat3::eulerZYX(pose.p[0], pose.p[1], pose.p[2]);
    t.translation = {pose.p[3], pose.p[4], pose.p[5]};
    t.center = center;
    return t;
}

double optimizeLevel(const LevelEval& eval, Pose& cur, const RigidRegConfig& cfg,
                     const Vec3& center) {
    double step_rot = cfg.init_step_rot, step_trans = cfg.init_step_trans;
    double best = eval(poseToTransform(cur, center));
    for (int sweep = 0; sweep < cfg.max_iters_per_level; ++sweep) {
        double gain = 0;
        for (int k = 0; k < 6; ++k) {
            const double step = k < 3 ? step_rot : step_trans;
            for (const int dir : {1, -1}) {
                for (int walk = 0; walk < 25; ++walk) {
                    Pose trial = cur;
                    trial.p[size_t(k)] += dir * step;
                    const double v = eval(poseToTransform(trial, center));
                    if (!(v > best)) break;
                    gain += v - best;
                    best = v;
                    cur = trial;
                }
            }
        }
        if (gain < cfg.converge_tol) {
            step_rot *= cfg.step_shrink;
            step_trans *= cfg.step_shrink;
            if (step_rot < 1e-5 && step_trans < 1e-3) break;
        }
    }
    return best;
}

} // namespace

RigidResult registerRigid(const Volume& moving, const Volume& fixed, const RigidRegConfig& cfg,
                          const Mask* region) {
    cfg.validate();
    if (region) requireSameGrid(fixed.meta, region->meta, "rigid region");

    // pyramids, finest first
    std::vector<Volume> fixedL{fixed}, movingL{moving};
    std::vector<Mask> regionL;
    if (region) regionL.push_back(*region);
    for (int l = 1; l < cfg.pyramid_levels; ++l) {
        const auto& prev = fixedL.back().meta.dims;
        if (std::min({prev.x, prev.y, prev.z}) < 8) break; // too coarse to be useful
        fixedL.push_back(downsample2x(fixedL.back()));
        movingL.push_back(downsample2x(movingL.back()));
        if (region) regionL.push_back(downsampleMask2x(regionL.back()));
    }

    const Vec3 center = fixed.meta.worldCenter();
    Pose cur;
    RigidResult res;
    for (int l = int(fixedL.size()) - 1; l >= 0; --l) {
        const LevelEval eval(fixedL[size_t(l)], movingL[size_t(l)],
                             region ? &regionL[size_t(l)] : nullptr, center);
        if (l == int(fixedL.size()) - 1 && eval.fixedVariance() <= 0)
            throw NumericError("rigid registration: constant input, similarity undefined");
        const double id_v = eval(poseToTransform(Pose{}, center));
        const double cur_v = eval(poseToTransform(cur, center));
        if (id_v > cur_v) cur = Pose{}; // never fall below the identity pose
        const double best = optimizeLevel(eval, cur, cfg, center);
        if (l == 0) {
            if (!std::isfinite(best))
                throw NumericError("rigid registration: non-finite similarity");
            res.final_ncc = best;
            res.identity_ncc = id_v;
        }
    }
    res.transform = poseToTransform(cur, center);
    return res;
}

} // namespace ablate
