#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ablate/aes.hpp"
#include "ablate/deform.hpp"
#include "ablate/diff.hpp"
#include "ablate/lungseg.hpp"
#include "ablate/metrics.hpp"
#include "ablate/rigid.hpp"

namespace ablate {

inline constexpr const char* kVersion = "0.1.0";

struct PreprocessConfig {
    Vec3 target_spacing{1.25, 1.25, 1.25};
    Vec3i target_dims{256, 256, 256};
    std::pair<float, float> window = kDefaultHuWindow; // normalization for registration

    void validate() const;
};

struct PipelinePaths {
    std::string pre, post;             // input volumes (required, HU)
    std::string lung_pre, lung_post;   // optional masks; segmented when empty
    std::string tumor_pre;             // tumor mask on the preoperative grid (required)
    std::string treatment_post;        // treatment mask on the postoperative grid (required)
    std::string out_dir = "out";
};

struct PipelineConfig {
    PipelinePaths paths;
    PreprocessConfig preprocess;
    LungSegConfig lungseg;
    RigidRegConfig rigid;
    DeformConfig deform;
    AESParams aes;
    RenderConfig render;

    std::string toJson() const;
    static PipelineConfig fromJson(const std::string& text);
    static PipelineConfig fromJsonFile(const std::string& path);
};

struct PipelineOutputs {
    std::string out_dir;
    AESReport aes;
    HuRegionStats hu_stats;
    std::vector<std::pair<std::string, MetricReport>> metrics; // label -> report
    std::vector<DeformLevelReport> deform_levels;
    double rigid_ncc = 0;
    std::map<std::string, std::string> artifacts; // name -> path
};

// Full chain: load -> preprocess -> lung masks -> rigid -> deformable (tumor
// and treatment regions excluded from the data term) -> warp -> difference ->
// HSV slices -> effectiveness score -> similarity metrics -> manifest.
// Throws ValidationError / NumericError with the failing stage named; files
// written before the failure are kept.
PipelineOutputs runPipeline(const PipelineConfig& cfg);

} // namespace ablate
