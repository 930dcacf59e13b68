#include "ablate/lungseg.hpp"

#include <vector>

#include "ablate/edt.hpp"
#include "ablate/error.hpp"
#include "ablate/io.hpp"

namespace ablate {

void LungSegConfig::validate() const {
    if (closing_radius_mm < 0) throw ValidationError("lungseg: closing_radius must be >= 0");
    if (min_component_mm3 <= 0) throw ValidationError("lungseg: min_component_volume must be > 0");
}

std::vector<int> connectedComponents(const Mask& mask, int& n_components) {
    const auto& d = mask.meta.dims;
    const std::int64_t total = mask.meta.voxelCount();
    std::vector<int> labels(static_cast<std::size_t>(total), 0);
    std::vector<std::int64_t> stack;
    int next = 0;
    for (std::int64_t s = 0; s < total; ++s) {
        if (!mask.voxels[size_t(s)] || labels[size_t(s)]) continue;
        ++next;
        labels[size_t(s)] = next;
        stack.clear();
        stack.push_back(s);
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            const int i = int(cur % d.x);
            const int j = int((cur / d.x) % d.y);
            const int k = int(cur / (std::int64_t(d.x) * d.y));
            const int ni[6] = {i - 1, i + 1, i, i, i, i};
            const int nj[6] = {j, j, j - 1, j + 1, j, j};
            const int nk[6] = {k, k, k, k, k - 1, k + 1};
            for (int a = 0; a < 6; ++a) {
                if (ni[a] < 0 || ni[a] >= d.x || nj[a] < 0 || nj[a] >= d.y || nk[a] < 0 ||
                    nk[a] >= d.z)
                    continue;
                const std::int64_t idx = mask.meta.index(ni[a], nj[a], nk[a]);
                if (!mask.voxels[size_t(idx)] || labels[size_t(idx)]) continue;
                labels[size_t(idx)] = next;
                stack.push_back(idx);
            }
        }
    }
    n_components = next;
    return labels;
}

namespace {

// 2D hole fill on one axial slice: background 4-connected flood from the
// slice border; unreached zero pixels are enclosed holes.
void fillSliceHoles(Mask& m, int k) {
    const auto& d = m.meta.dims;
    std::vector<std::uint8_t> outside(static_cast<std::size_t>(d.x) * d.y, 0);
    std::vector<std::pair<int, int>> stack;
    auto push = [&](int i, int j) {
        const size_t s = size_t(j) * d.x + i;
        if (!outside[s] && !m.voxels[size_t(m.meta.index(i, j, k))]) {
            outside[s] = 1;
            stack.emplace_back(i, j);
        }
    };
    for (int i = 0; i < d.x; ++i) {
        push(i, 0);
        push(i, d.y - 1);
    }
    for (int j = 0; j < d.y; ++j) {
        push(0, j);
        push(d.x - 1, j);
    }
    while (!stack.empty()) {
        auto [i, j] = stack.back();
        stack.pop_back();
        if (i > 0) push(i - 1, j);
        if (i < d.x - 1) push(i + 1, j);
        if (j > 0) push(i, j - 1);
        if (j < d.y - 1) push(i, j + 1);
    }
    for (int j = 0; j < d.y; ++j)
        for (int i = 0; i < d.x; ++i)
            if (!outside[size_t(j) * d.x + i]) m.voxels[size_t(m.meta.index(i, j, k))] = 1;
}

} // namespace

Mask segmentLung(const Volume& vol, const LungSegConfig& cfg) {
    cfg.validate();
    if (vol.unit != Unit::HU) throw ValidationError("segment_lung: volume must be in HU");

    const auto& d = vol.meta.dims;
    Mask air(vol.meta);
    for (size_t i = 0; i < air.voxels.size(); ++i)
        air.voxels[i] = vol.voxels[i] <= cfg.air_threshold_hu ? 1 : 0;

    int n = 0;
    const auto labels = connectedComponents(air, n);
    if (n == 0) throw ValidationError("no lung found");

    // component voxel counts + boundary contact
    std::vector<std::int64_t> count(static_cast<std::size_t>(n) + 1, 0);
    std::vector<std::uint8_t> touches(static_cast<std::size_t>(n) + 1, 0);
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                const int l = labels[size_t(vol.meta.index(i, j, k))];
                if (!l) continue;
                ++count[size_t(l)];
                if (i == 0 || j == 0 || k == 0 || i == d.x - 1 || j == d.y - 1 || k == d.z - 1)
                    touches[size_t(l)] = 1;
            }

    const double vox_mm3 = vol.meta.voxelVolumeMm3();
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(n) + 1, 0);
    bool any = false;
    for (int l = 1; l <= n; ++l) {
        keep[size_t(l)] =
            !touches[size_t(l)] && double(count[size_t(l)]) * vox_mm3 >= cfg.min_component_mm3;
        any = any || keep[size_t(l)];
    }
    if (!any) throw ValidationError("no lung found");

    Mask lung(vol.meta);
    for (size_t i = 0; i < lung.voxels.size(); ++i)
        lung.voxels[i] = keep[size_t(labels[i])] ? 1 : 0;

    if (cfg.closing_radius_mm > 0) lung = closeMask(lung, cfg.closing_radius_mm);
    if (cfg.fill_holes)
        for (int k = 0; k < d.z; ++k) fillSliceHoles(lung, k);
    return lung;
}

Volume applyLungMask(const Volume& vol, const Mask& lung, float fill) {
    requireSameGrid(vol.meta, lung.meta, "apply_lung_mask");
    Volume out(vol.meta, vol.unit);
    for (size_t i = 0; i < out.voxels.size(); ++i)
        out.voxels[i] = lung.voxels[i] ? vol.voxels[i] : fill;
    return out;
}

Mask ingestMask(const std::string& path, const GridMeta& grid) {
    Mask m = loadMask(path);
    if (m.meta == grid) return m;
    return resampleMaskToGrid(m, grid);
}

} // namespace ablate
