#include "ablate/diff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ablate/error.hpp"
#include "ablate/png.hpp"

namespace ablate {

DiffVolume difference(const Volume& post, const Volume& registered_pre) {
    requireSameGrid(post.meta, registered_pre.meta, "difference");
    if (post.unit != registered_pre.unit)
        throw ValidationError("difference: unit mismatch (HU vs normalized)");
    Volume out = Volume::filled(post.meta, post.unit, 0.0f);
    for (size_t i = 0; i < out.voxels.size(); ++i)
        out.voxels[i] = post.voxels[i] - registered_pre.voxels[i];
    return out;
}

void RenderConfig::validate() const {
    if (diff_window <= 0) throw ValidationError("render: diff_window must be > 0");
    if (slice_axis < 0 || slice_axis > 2) throw ValidationError("render: slice_axis must be 0..2");
}

void hsvToRgb(double h, double s, double v, std::uint8_t rgb[3]) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
    s = std::clamp(s, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h < 60) {
        r = c; g = x;
    } else if (h < 120) {
        r = x; g = c;
    } else if (h < 180) {
        g = c; b = x;
    } else if (h < 240) {
        g = x; b = c;
    } else if (h < 300) {
        r = x; b = c;
    } else {
        r = c; b = x;
    }
    rgb[0] = std::uint8_t(std::lround((r + m) * 255.0));
    rgb[1] = std::uint8_t(std::lround((g + m) * 255.0));
    rgb[2] = std::uint8_t(std::lround((b + m) * 255.0));
}

namespace {

// in-plane dims and voxel lookup for a slice perpendicular to cfg.slice_axis
struct SlicePlane {
    int axis, index, width, height;
    const GridMeta* meta;

    std::int64_t voxel(int col, int row) const {
        switch (axis) {
            case 0: return meta->index(index, col, row);
            case 1: return meta->index(col, index, row);
            default: return meta->index(col, row, index);
        }
    }
};

SlicePlane makePlane(const GridMeta& meta, int axis, int index) {
    SlicePlane p{axis, index, 0, 0, &meta};
    switch (axis) {
        case 0: p.width = meta.dims.y; p.height = meta.dims.z; break;
        case 1: p.width = meta.dims.x; p.height = meta.dims.z; break;
        default: p.width = meta.dims.x; p.height = meta.dims.y; break;
    }
    return p;
}

bool contourAt(const Mask& m, const SlicePlane& p, int col, int row) {
    if (!m.voxels[size_t(p.voxel(col, row))]) return false;
    const int nc[4] = {col - 1, col + 1, col, col};
    const int nr[4] = {row, row, row - 1, row + 1};
    for (int e = 0; e < 4; ++e) {
        if (nc[e] < 0 || nc[e] >= p.width || nr[e] < 0 || nr[e] >= p.height) return true;
        if (!m.voxels[size_t(p.voxel(nc[e], nr[e]))]) return true;
    }
    return false;
}

} // namespace

RenderResult renderSlices(const DiffVolume& diff, const Volume& fixed, const Mask& tumor_reg,
                          const Mask& treatment, const RenderConfig& cfg,
                          const std::string& out_dir) {
    cfg.validate();
    requireSameGrid(diff.meta, fixed.meta, "render");
    requireSameGrid(diff.meta, tumor_reg.meta, "render tumor mask");
    requireSameGrid(diff.meta, treatment.meta, "render treatment mask");
    std::filesystem::create_directories(out_dir);

    const int axis = cfg.slice_axis;
    const char axis_name = axis == 0 ? 'x' : axis == 1 ? 'y' : 'z';
    const int n_slices = axis == 0 ? diff.meta.dims.x : axis == 1 ? diff.meta.dims.y
                                                                  : diff.meta.dims.z;

    // grayscale anatomy backdrop normalized over the fixed volume
    const double fmin = fixed.minValue(), fmax = fixed.maxValue();
    const double fscale = fmax > fmin ? 1.0 / (fmax - fmin) : 0.0;

    // slices worth emitting: anything intersecting tumor or treatment
    std::vector<std::uint8_t> wanted(static_cast<std::size_t>(n_slices), cfg.all_slices ? 1 : 0);
    if (!cfg.all_slices) {
        const auto& d = diff.meta.dims;
        for (int k = 0; k < d.z; ++k)
            for (int j = 0; j < d.y; ++j)
                for (int i = 0; i < d.x; ++i) {
                    const size_t vox = size_t(diff.meta.index(i, j, k));
                    if (!tumor_reg.voxels[vox] && !treatment.voxels[vox]) continue;
                    wanted[size_t(axis == 0 ? i : axis == 1 ? j : k)] = 1;
                }
    }

    RenderResult result;
    std::vector<std::uint8_t> rgb;
    for (int s = 0; s < n_slices; ++s) {
        if (!wanted[size_t(s)]) continue;
        const SlicePlane plane = makePlane(diff.meta, axis, s);
        rgb.assign(static_cast<std::size_t>(plane.width) * plane.height * 3, 0);
        for (int row = 0; row < plane.height; ++row)
            for (int col = 0; col < plane.width; ++col) {
                const size_t vox = size_t(plane.voxel(col, row));
                std::uint8_t* px = rgb.data() + (static_cast<std::size_t>(row) * plane.width + col) * 3;
                const double t =
                    std::clamp(double(diff.voxels[vox]) / cfg.diff_window, -1.0, 1.0);
                const double value = (double(fixed.voxels[vox]) - fmin) * fscale;
                hsvToRgb(120.0 - 120.0 * t, std::abs(t), value, px);
                if (contourAt(treatment, plane, col, row)) {
                    px[0] = 0; px[1] = 0; px[2] = 255;
                }
                if (contourAt(tumor_reg, plane, col, row)) {
                    px[0] = 255; px[1] = 255; px[2] = 0;
                }
            }
        char name[64];
        std::snprintf(name, sizeof name, "%s_%c_%03d.png", cfg.prefix.c_str(), axis_name, s);
        const std::string path = out_dir + "/" + name;
        writePng(path, plane.width, plane.height, rgb.data());
        result.slices.push_back({s, name});
    }

    nlohmann::json idx;
    idx["axis"] = std::string(1, axis_name);
    idx["diff_window"] = cfg.diff_window;
    idx["prefix"] = cfg.prefix;
    idx["colors"] = {{"tumor_contour", "#ffff00"}, {"treatment_contour", "#0000ff"}};
    idx["slices"] = nlohmann::json::array();
    for (const auto& sl : result.slices)
        idx["slices"].push_back({{"index", sl.index}, {"file", sl.file}});
    char idx_name[64];
    std::snprintf(idx_name, sizeof idx_name, "%s_%c_index.json", cfg.prefix.c_str(), axis_name);
    result.index_json = out_dir + "/" + idx_name;
    std::ofstream f(result.index_json, std::ios::trunc);
    if (!f) throw Error("cannot write " + result.index_json);
    f << idx.dump(2) << "\n";
    return result;
}

} // namespace ablate
