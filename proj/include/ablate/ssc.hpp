#pragma once

#include <vector>

#include "ablate/volume.hpp"

namespace ablate {

// Per-voxel self-similarity descriptor: 12 channels, one per unordered pair
// of orthogonal 6-neighborhood offsets. Channel c = exp(-d_c / sigma^2) where
// d_c is the mean squared patch distance between the two neighbor patches and
// sigma^2 is the mean of the 12 distances at that voxel (floored at 1e-6);
// channels are then normalized so the per-voxel maximum is 1. All voxel reads
// clamp coordinates to the grid (replicate border).
struct SscVolume {
    static constexpr int kChannels = 12;

    GridMeta meta;
    std::vector<float> data; // kChannels values per voxel, interleaved

    const float* at(std::int64_t voxel) const { return data.data() + voxel * kChannels; }
    float* at(std::int64_t voxel) { return data.data() + voxel * kChannels; }
};

// The 6 face-neighbor offsets and the 12 orthogonal unordered pairs (indices
// into the offset table), in the fixed enumeration order used everywhere.
struct SscPairTable {
    int offsets[6][3];
    int pair_a[12];
    int pair_b[12];
};
const SscPairTable& sscPairs();

// Box-filtered implementation; interior voxels use separable sliding sums,
// border voxels fall back to the direct definition. patch side = 2*radius+1.
SscVolume computeSsc(const Volume& vol, int patch_radius = 1);

// Direct per-voxel evaluation of the definition above (reference path, used
// for border voxels and as a readable statement of the semantics).
void sscAtVoxel(const Volume& vol, int i, int j, int k, int patch_radius, float out[12]);

} // namespace ablate
