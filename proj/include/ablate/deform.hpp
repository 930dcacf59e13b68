#pragma once

#include <vector>

#include "ablate/ssc.hpp"
#include "ablate/volume.hpp"

namespace ablate {

// Uniform node lattice over the voxel grid. Node (a,b,c) sits at voxel
// start + (a,b,c) * spacing; counts are chosen so the lattice spans the
// volume (ceil(dim / spacing) nodes, centered).
struct ControlGrid {
    Vec3i nodes{1, 1, 1};
    Vec3i start{0, 0, 0};
    int spacing = 1; // voxels between adjacent nodes
    int level = 0;

    static ControlGrid make(const Vec3i& dims, int node_spacing, int level = 0);

    std::int64_t count() const { return std::int64_t(nodes.x) * nodes.y * nodes.z; }
    std::int64_t index(int a, int b, int c) const {
        return (std::int64_t(c) * nodes.y + b) * nodes.x + a;
    }
    Vec3i abc(std::int64_t idx) const {
        const int a = int(idx % nodes.x);
        const int b = int((idx / nodes.x) % nodes.y);
        const int c = int(idx / (std::int64_t(nodes.x) * nodes.y));
        return {a, b, c};
    }
    Vec3i nodeVoxel(int a, int b, int c) const {
        return {start.x + a * spacing, start.y + b * spacing, start.z + c * spacing};
    }
};

// Discrete displacement labels: {-l_max*q, ..., -q, 0, q, ..., l_max*q}^3 voxels.
struct LabelSpace {
    int l_max = 6;
    int q = 2;

    int perAxis() const { return 2 * l_max + 1; }
    std::int64_t count() const {
        const std::int64_t n = perAxis();
        return n * n * n;
    }
    int axisDisp(int axis_index) const { return (axis_index - l_max) * q; }
    Vec3i disp(std::int64_t label) const {
        const int n = perAxis();
        return {axisDisp(int(label % n)), axisDisp(int((label / n) % n)),
                axisDisp(int(label / (std::int64_t(n) * n)))};
    }
    std::int64_t index(int ix, int iy, int iz) const {
        const std::int64_t n = perAxis();
        return (std::int64_t(iz) * n + iy) * n + ix;
    }
};

struct DeformLevel {
    int node_spacing; // voxels
    int l_max;
    int q; // voxels per label step
};

struct DeformConfig {
    std::vector<DeformLevel> levels{{8, 6, 2}, {6, 4, 1}, {4, 2, 1}};
    double alpha = 1.6;   // regularization weight
    int patch_radius = 1; // SSC patch radius

    void validate() const;
};

// Sampling context shared by the data term, energy audit, and optimizer.
// A node's patch is the 3x3x3 set of voxels {node + s * sample_stride},
// clamped to the grid. Excluded fixed-side samples are dropped; a sample is
// also dropped when its displaced moving-side voxel is excluded. The prior
// (running field from coarser levels / the rigid stage, mm on the fixed
// grid) shifts the moving-side read position, rounded to whole voxels.
struct DataCostContext {
    const SscVolume* desc_fixed = nullptr;
    const SscVolume* desc_moving = nullptr;
    const Mask* exclude_fixed = nullptr;
    const Mask* exclude_moving = nullptr;
    const DisplacementField* prior = nullptr;
    int sample_stride = 1;
};

// Patch dissimilarity between the fixed patch at the node and the moving
// patch displaced by disp_vox: the channel-mean absolute descriptor
// difference per sample, averaged over the observable (non-excluded) moving
// samples and scaled by the fixed-side patch size, so the magnitude tracks
// the patch while label-dependent exclusion dropouts stay neutral. >= 0; a
// displacement with no observable sample costs the patch size (worst case)
// so masked regions never attract.
double dataCost(const DataCostContext& ctx, const Vec3i& node_voxel, const Vec3i& disp_vox);

// Per-node data-cost tables for all labels, same arithmetic as dataCost
// (table[node * labels.count() + label] bitwise equals the direct call).
std::vector<double> dataCostTable(const DataCostContext& ctx, const ControlGrid& grid,
                                  const LabelSpace& labels);

// ||u_p - u_q||^2 / ||x_p - x_q|| with displacements and positions in mm.
double regCost(const Vec3& u_p, const Vec3& u_q, const Vec3& x_p, const Vec3& x_q);

// Minimum spanning tree over the 6-connected node lattice (Prim, edge weight
// = fixed-descriptor patch dissimilarity), then exact min-sum dynamic
// programming over the tree. Label ties break toward the smaller displacement
// magnitude, then lexicographically. alpha = 0 reduces to per-node argmin.
// Returns per-node displacements in voxels.
std::vector<Vec3i> optimizeLevel(const DataCostContext& ctx, const ControlGrid& grid,
                                 const LabelSpace& labels, double alpha);

// Full 6-lattice energy E(f) = sum_p D(f_p) + alpha * sum_(p,q) R(f_p, f_q)
// of an assignment (audit; the pairwise set is the lattice, not the MST).
double totalEnergy(const DataCostContext& ctx, const ControlGrid& grid, const LabelSpace& labels,
                   const std::vector<Vec3i>& disp_vox, double alpha);

// Strict-improvement label sweeps on the full-lattice energy; never increases
// totalEnergy. Used to polish the tree solution against off-tree edges.
void icmRefine(const DataCostContext& ctx, const ControlGrid& grid, const LabelSpace& labels,
               double alpha, std::vector<Vec3i>& disp_vox, int max_sweeps = 4);

// Trilinear interpolation of node displacements (mm) to a dense per-voxel
// field on the target grid; the node lattice lives on the target's voxel
// coordinates.
DisplacementField scaleField(const std::vector<Vec3>& node_disp_mm, const ControlGrid& grid,
                             const GridMeta& target);

struct DeformLevelReport {
    int node_spacing = 0, l_max = 0, q = 0;
    std::int64_t nodes = 0;
    double energy_zero = 0;  // full-lattice energy of the zero assignment
    double energy_tree = 0;  // after MST + tree DP
    double energy_final = 0; // after strict-improvement polish
};

struct DeformResult {
    DisplacementField field; // dense mm displacements on the fixed grid
    std::vector<DeformLevelReport> levels;
};

// Coarse-to-fine discrete registration of `moving` (already rigidly aligned)
// onto `fixed`. Exclusion masks (tumor on the moving side, treatment zone on
// the fixed side) drop samples from the data term rather than inpainting.
DeformResult registerDeformable(const Volume& moving, const Volume& fixed,
                                const Mask* exclude_moving, const Mask* exclude_fixed,
                                const DeformConfig& cfg = {});

} // namespace ablate
