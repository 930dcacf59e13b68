#pragma once

#include <string>
#include <vector>

#include "ablate/volume.hpp"

namespace ablate {

// Signed voxelwise change volume (post - registered pre), same grid/unit.
using DiffVolume = Volume;

DiffVolume difference(const Volume& post, const Volume& registered_pre);

struct RenderConfig {
    int slice_axis = 2;         // 0 = x (sagittal), 1 = y (coronal), 2 = z (axial)
    double diff_window = 400.0; // signed range mapped onto hue/saturation
    bool all_slices = false;    // default: only slices touching tumor or treatment
    std::string prefix = "case";

    void validate() const;
};

struct RenderedSlice {
    int index = 0;
    std::string file; // name relative to the output directory
};

struct RenderResult {
    std::vector<RenderedSlice> slices;
    std::string index_json; // path of the emitted slice index
};

// HSV pseudo-color change maps: hue runs blue (change <= -window) through
// green (no change) to red (change >= +window), saturation = |change|/window,
// value = the fixed image in grayscale. 1-pixel contours overlay the
// registered tumor mask (yellow) and the treatment mask (blue); treatment is
// drawn first so tumor stays visible where they coincide. One PNG per slice,
// named <prefix>_<axis>_<index>.png, plus an index JSON.
RenderResult renderSlices(const DiffVolume& diff, const Volume& fixed, const Mask& tumor_reg,
                          const Mask& treatment, const RenderConfig& cfg,
                          const std::string& out_dir);

// Exposed for tests: HSV (h in degrees, s/v in [0,1]) to 8-bit RGB.
void hsvToRgb(double h, double s, double v, std::uint8_t rgb[3]);

} // namespace ablate
