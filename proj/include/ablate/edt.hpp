#pragma once

#include <vector>

#include "ablate/volume.hpp"

namespace ablate {

// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
// foreground voxel center, honoring anisotropic spacing. Voxels inside the
// mask get 0; if the mask is empty every voxel gets +infinity.
std::vector<float> squaredEdt(const Mask& mask);

// Morphology with a Euclidean ball of the given radius (mm), implemented on
// top of the exact distance transform so results are rotation-consistent and
// spacing-aware. radius_mm < 0 is a validation error; 0 returns a copy.
Mask dilateMask(const Mask& mask, double radius_mm);
Mask erodeMask(const Mask& mask, double radius_mm);
Mask closeMask(const Mask& mask, double radius_mm);

// Sub-voxel dilation measured from the mask boundary rather than from voxel
// centers: the inside/outside interface is sampled at the face centers
// between 6-adjacent voxel pairs on a half-pitch lattice, and a voxel joins
// the output when its center lies within margin_mm of a boundary sample.
// Expanding a voxelized ball this way tracks the analytic radius to well
// under a voxel, where center-distance dilation is biased by roughly half a
// voxel. Cost scales with the dilated object's bounding box, not the volume.
// margin_mm < 0 or an empty mask is a validation error; 0 returns a copy.
Mask dilateMaskBoundary(const Mask& mask, double margin_mm);

} // namespace ablate
