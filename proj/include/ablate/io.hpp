#pragma once

#include <string>

#include "ablate/volume.hpp"

namespace ablate {

// Formats, selected by extension:
//   .nii / .nii.gz  NIfTI-1 single file, little-endian, axis-aligned only;
//                   datatypes uint8 / int16 / float32 (scl_slope applied on read)
//   .raw            float32 little-endian x-fastest, with a <name>.json sidecar
//                   {dims, spacing, origin, unit}
Volume loadVolume(const std::string& path);
void saveVolume(const Volume& vol, const std::string& path);

// Any nonzero voxel counts as 1.
Mask loadMask(const std::string& path);
void saveMask(const Mask& mask, const std::string& path);

// Dense field: <name>.raw (float32 triples) + <name>.json
// {dims, spacing, origin, units:"mm", components:3}.
DisplacementField loadField(const std::string& path);
void saveField(const DisplacementField& field, const std::string& path);

// FNV-1a 64-bit content hash, hex string; used for provenance in reports.
std::string fileContentHash(const std::string& path);

} // namespace ablate
