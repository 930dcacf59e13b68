#pragma once

#include "ablate/rigid.hpp"
#include "ablate/volume.hpp"

namespace ablate {

// Chained map evaluated in fixed-image space: an output voxel at world x
// reads the source at rigid^-1(x + u(x)). Sampling happens once through the
// whole chain (no intermediate resampling).
struct CompositeTransform {
    RigidTransform rigid;    // coarse alignment
    DisplacementField field; // mm displacements on the fixed grid
};

// Output grid = field grid; outside samples use vol's minimum value.
Volume applyComposite(const Volume& vol, const CompositeTransform& T,
                      Interp mode = Interp::Trilinear);

// Nearest-neighbor warp of a binary mask; output stays binary, fill 0.
Mask warpMask(const Mask& mask, const CompositeTransform& T);

} // namespace ablate
