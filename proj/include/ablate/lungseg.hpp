#pragma once

#include <string>

#include "ablate/volume.hpp"

namespace ablate {

// Classical intensity + morphology lung parenchyma segmentation. The pipeline
// also accepts externally produced masks (ingestMask) so higher-quality masks
// can be slotted in without code changes.
struct LungSegConfig {
    double air_threshold_hu = -320.0;      // voxels at or below this are air candidates
    double min_component_mm3 = 50000.0;    // drop smaller connected components
    double closing_radius_mm = 3.0;        // morphological closing radius
    bool fill_holes = true;                // 2D per-axial-slice hole fill

    void validate() const;
};

// Threshold -> remove boundary-touching components (external air) -> keep
// large components -> closing -> per-slice hole fill. Throws ValidationError
// "no lung found" when nothing survives.
Mask segmentLung(const Volume& vol, const LungSegConfig& cfg = {});

// Keep voxels where lung=1, set the rest to fill. Unit tag preserved.
Volume applyLungMask(const Volume& vol, const Mask& lung, float fill = -1000.0f);

// Load a mask file (any nonzero value counts as 1) and nearest-neighbor
// resample it onto the target grid when the grids differ.
Mask ingestMask(const std::string& path, const GridMeta& grid);

// 6-connected component labeling; returns labels (0 = background, 1..n) and
// sets n_components. Exposed for tests.
std::vector<int> connectedComponents(const Mask& mask, int& n_components);

} // namespace ablate
