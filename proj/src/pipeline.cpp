#include "ablate/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "ablate/error.hpp"
#include "ablate/io.hpp"
#include "ablate/parallel.hpp"
#include "ablate/warp.hpp"

namespace ablate {

namespace fs = std::filesystem;
using nlohmann::json;

void PreprocessConfig::validate() const {
    if (!(target_spacing.x > 0 && target_spacing.y > 0 && target_spacing.z > 0))
        throw ValidationError("preprocess: target_spacing must be positive");
    if (target_dims.x < 8 || target_dims.y < 8 || target_dims.z < 8)
        throw ValidationError("preprocess: target_dims must be at least 8 per axis");
    if (!(window.first < window.second))
        throw ValidationError("preprocess: window must satisfy lo < hi");
}

namespace {

void checkKeys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) { ok = true; break; }
        if (!ok)
            throw ValidationError(std::string("config: unknown key \"") + it.key() + "\" in " +
                                  where);
    }
}

Vec3 vec3From(const json& j, const char* where) {
    if (!j.is_array() || j.size() != 3)
        throw ValidationError(std::string("config: ") + where + " must be an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Vec3i vec3iFrom(const json& j, const char* where) {
    if (!j.is_array() || j.size() != 3)
        throw ValidationError(std::string("config: ") + where + " must be an array of 3 integers");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

json configToJson(const PipelineConfig& c) {
    json j;
    j["paths"] = {{"pre", c.paths.pre},
                  {"post", c.paths.post},
                  {"lung_pre", c.paths.lung_pre},
                  {"lung_post", c.paths.lung_post},
                  {"tumor_pre", c.paths.tumor_pre},
                  {"treatment_post", c.paths.treatment_post},
                  {"out_dir", c.paths.out_dir}};
    j["preprocess"] = {
        {"target_spacing",
         {c.preprocess.target_spacing.x, c.preprocess.target_spacing.y,
          c.preprocess.target_spacing.z}},
        {"target_dims",
         {c.preprocess.target_dims.x, c.preprocess.target_dims.y, c.preprocess.target_dims.z}},
        {"window", {c.preprocess.window.first, c.preprocess.window.second}}};
    j["lungseg"] = {{"air_threshold_hu", c.lungseg.air_threshold_hu},
                    {"min_component_mm3", c.lungseg.min_component_mm3},
                    {"closing_radius_mm", c.lungseg.closing_radius_mm},
                    {"fill_holes", c.lungseg.fill_holes}};
    j["rigid"] = {{"pyramid_levels", c.rigid.pyramid_levels},
                  {"max_iters_per_level", c.rigid.max_iters_per_level},
                  {"init_step_rot", c.rigid.init_step_rot},
                  {"init_step_trans", c.rigid.init_step_trans},
                  {"step_shrink", c.rigid.step_shrink},
                  {"converge_tol", c.rigid.converge_tol}};
    json levels = json::array();
    for (const auto& l : c.deform.levels) levels.push_back({l.node_spacing, l.l_max, l.q});
    j["deform"] = {{"levels", levels},
                   {"alpha", c.deform.alpha},
                   {"patch_radius", c.deform.patch_radius}};
    j["aes"] = {{"alpha", c.aes.alpha},     {"beta", c.aes.beta},
                {"gamma", c.aes.gamma},     {"theta", c.aes.theta},
                {"lambda", c.aes.lambda},   {"margin_mm", c.aes.margin_mm}};
    j["render"] = {{"slice_axis", c.render.slice_axis},
                   {"diff_window", c.render.diff_window},
                   {"all_slices", c.render.all_slices},
                   {"prefix", c.render.prefix}};
    return j;
}

PipelineConfig configFromJson(const json& j) {
    PipelineConfig c;
    checkKeys(j, {"paths", "preprocess", "lungseg", "rigid", "deform", "aes", "render"}, "root");
    if (j.contains("paths")) {
        const json& p = j["paths"];
        checkKeys(p, {"pre", "post", "lung_pre", "lung_post", "tumor_pre", "treatment_post",
                      "out_dir"},
                  "paths");
        c.paths.pre = p.value("pre", c.paths.pre);
        c.paths.post = p.value("post", c.paths.post);
        c.paths.lung_pre = p.value("lung_pre", c.paths.lung_pre);
        c.paths.lung_post = p.value("lung_post", c.paths.lung_post);
        c.paths.tumor_pre = p.value("tumor_pre", c.paths.tumor_pre);
        c.paths.treatment_post = p.value("treatment_post", c.paths.treatment_post);
        c.paths.out_dir = p.value("out_dir", c.paths.out_dir);
    }
    if (j.contains("preprocess")) {
        const json& p = j["preprocess"];
        checkKeys(p, {"target_spacing", "target_dims", "window"}, "preprocess");
        if (p.contains("target_spacing"))
            c.preprocess.target_spacing = vec3From(p["target_spacing"], "preprocess.target_spacing");
        if (p.contains("target_dims"))
            c.preprocess.target_dims = vec3iFrom(p["target_dims"], "preprocess.target_dims");
        if (p.contains("window")) {
            const json& w = p["window"];
            if (!w.is_array() || w.size() != 2)
                throw ValidationError("config: preprocess.window must be [lo, hi]");
            c.preprocess.window = {w[0].get<float>(), w[1].get<float>()};
        }
    }
    if (j.contains("lungseg")) {
        const json& p = j["lungseg"];
        checkKeys(p, {"air_threshold_hu", "min_component_mm3", "closing_radius_mm", "fill_holes"},
                  "lungseg");
        c.lungseg.air_threshold_hu = p.value("air_threshold_hu", c.lungseg.air_threshold_hu);
        c.lungseg.min_component_mm3 = p.value("min_component_mm3", c.lungseg.min_component_mm3);
        c.lungseg.closing_radius_mm = p.value("closing_radius_mm", c.lungseg.closing_radius_mm);
        c.lungseg.fill_holes = p.value("fill_holes", c.lungseg.fill_holes);
    }
    if (j.contains("rigid")) {
        const json& p = j["rigid"];
        checkKeys(p, {"pyramid_levels", "max_iters_per_level", "init_step_rot", "init_step_trans",
                      "step_shrink", "converge_tol"},
                  "rigid");
        c.rigid.pyramid_levels = p.value("pyramid_levels", c.rigid.pyramid_levels);
        c.rigid.max_iters_per_level = p.value("max_iters_per_level", c.rigid.max_iters_per_level);
        c.rigid.init_step_rot = p.value("init_step_rot", c.rigid.init_step_rot);
        c.rigid.init_step_trans = p.value("init_step_trans", c.rigid.init_step_trans);
        c.rigid.step_shrink = p.value("step_shrink", c.rigid.step_shrink);
        c.rigid.converge_tol = p.value("converge_tol", c.rigid.converge_tol);
    }
    if (j.contains("deform")) {
        const json& p = j["deform"];
        checkKeys(p, {"levels", "alpha", "patch_radius"}, "deform");
        if (p.contains("levels")) {
            const json& ls = p["levels"];
            if (!ls.is_array() || ls.empty())
                throw ValidationError("config: deform.levels must be a non-empty array");
            c.deform.levels.clear();
            for (const json& l : ls) {
                if (!l.is_array() || l.size() != 3)
                    throw ValidationError(
                        "config: each deform level must be [node_spacing, l_max, q]");
                c.deform.levels.push_back({l[0].get<int>(), l[1].get<int>(), l[2].get<int>()});
            }
        }
        c.deform.alpha = p.value("alpha", c.deform.alpha);
        c.deform.patch_radius = p.value("patch_radius", c.deform.patch_radius);
    }
    if (j.contains("aes")) {
        const json& p = j["aes"];
        checkKeys(p, {"alpha", "beta", "gamma", "theta", "lambda", "margin_mm"}, "aes");
        c.aes.alpha = p.value("alpha", c.aes.alpha);
        c.aes.beta = p.value("beta", c.aes.beta);
        c.aes.gamma = p.value("gamma", c.aes.gamma);
        c.aes.theta = p.value("theta", c.aes.theta);
        c.aes.lambda = p.value("lambda", c.aes.lambda);
        c.aes.margin_mm = p.value("margin_mm", c.aes.margin_mm);
    }
    if (j.contains("render")) {
        const json& p = j["render"];
        checkKeys(p, {"slice_axis", "diff_window", "all_slices", "prefix"}, "render");
        c.render.slice_axis = p.value("slice_axis", c.render.slice_axis);
        c.render.diff_window = p.value("diff_window", c.render.diff_window);
        c.render.all_slices = p.value("all_slices", c.render.all_slices);
        c.render.prefix = p.value("prefix", c.render.prefix);
    }
    return c;
}

void writeText(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("cannot write " + path);
}

class StageClock {
public:
    template <typename Fn>
    decltype(auto) run(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<std::invoke_result_t<Fn&>>) {
                fn();
                record(name, t0);
            } else {
                auto result = fn();
                record(name, t0);
                return result;
            }
        } catch (const ValidationError& e) {
            throw ValidationError("stage " + name + ": " + e.what());
        } catch (const NumericError& e) {
            throw NumericError("stage " + name + ": " + e.what());
        } catch (const Error& e) {
            throw Error("stage " + name + ": " + e.what());
        }
    }

    const std::vector<std::pair<std::string, double>>& timings() const { return timings_; }

private:
    void record(const std::string& name, std::chrono::steady_clock::time_point t0) {
        const auto dt = std::chrono::steady_clock::now() - t0;
        timings_.emplace_back(name,
                              std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(dt)
                                  .count());
    }

    std::vector<std::pair<std::string, double>> timings_;
};

Mask unionMask(const Mask& a, const Mask& b) {
    requireSameGrid(a.meta, b.meta, "mask union");
    Mask out = Mask::filled(a.meta, 0);
    for (std::size_t i = 0; i < out.voxels.size(); ++i)
        out.voxels[i] = (a.voxels[i] || b.voxels[i]) ? 1 : 0;
    return out;
}

} // namespace

std::string PipelineConfig::toJson() const { return configToJson(*this).dump(2) + "\n"; }

PipelineConfig PipelineConfig::fromJson(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config: root must be a JSON object");
    return configFromJson(j);
}

PipelineConfig PipelineConfig::fromJsonFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("config: cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fromJson(text);
}

PipelineOutputs runPipeline(const PipelineConfig& cfg) {
    cfg.preprocess.validate();
    cfg.lungseg.validate();
    cfg.rigid.validate();
    cfg.deform.validate();
    cfg.aes.validate();
    cfg.render.validate();
    if (cfg.paths.pre.empty() || cfg.paths.post.empty())
        throw ValidationError("pipeline: paths.pre and paths.post are required");
    if (cfg.paths.tumor_pre.empty())
        throw ValidationError("pipeline: paths.tumor_pre is required (scoring needs the tumor)");
    if (cfg.paths.treatment_post.empty())
        throw ValidationError(
            "pipeline: paths.treatment_post is required (scoring needs the treatment zone)");

    PipelineOutputs out;
    out.out_dir = cfg.paths.out_dir;
    fs::create_directories(fs::path(cfg.paths.out_dir));
    const auto art = [&](const std::string& name, const std::string& file) {
        const std::string path = (fs::path(cfg.paths.out_dir) / file).string();
        out.artifacts[name] = path;
        return path;
    };

    StageClock clock;

    // Config echo (also the hashing target for the manifest).
    const std::string config_path = art("config", "config.json");
    writeText(config_path, cfg.toJson());

    std::map<std::string, std::string> input_hashes;
    for (const auto& [label, path] :
         std::initializer_list<std::pair<const char*, const std::string*>>{
             {"pre", &cfg.paths.pre},
             {"post", &cfg.paths.post},
             {"lung_pre", &cfg.paths.lung_pre},
             {"lung_post", &cfg.paths.lung_post},
             {"tumor_pre", &cfg.paths.tumor_pre},
             {"treatment_post", &cfg.paths.treatment_post}}) {
        if (!path->empty()) input_hashes[label] = fileContentHash(*path);
    }

    // Load.
    Volume pre_raw, post_raw;
    clock.run("load", [&] {
        pre_raw = loadVolume(cfg.paths.pre);
        post_raw = loadVolume(cfg.paths.post);
        if (pre_raw.unit != Unit::HU || post_raw.unit != Unit::HU)
            throw ValidationError("inputs must be HU volumes");
    });

    // Preprocess: common spacing, fixed matrix size, padding at air.
    Volume pre_prep, post_prep;
    clock.run("preprocess", [&] {
        pre_prep = cropOrPad(resample(pre_raw, cfg.preprocess.target_spacing, Interp::Trilinear),
                             cfg.preprocess.target_dims, -1000.0f);
        post_prep = cropOrPad(resample(post_raw, cfg.preprocess.target_spacing, Interp::Trilinear),
                              cfg.preprocess.target_dims, -1000.0f);
        pre_raw = Volume();
        post_raw = Volume();
    });

    // Lung masks: external when provided, else segmented.
    Mask lung_pre, lung_post, tumor, treatment;
    clock.run("lung-mask", [&] {
        lung_pre = cfg.paths.lung_pre.empty() ? segmentLung(pre_prep, cfg.lungseg)
                                              : ingestMask(cfg.paths.lung_pre, pre_prep.meta);
        lung_post = cfg.paths.lung_post.empty() ? segmentLung(post_prep, cfg.lungseg)
                                                : ingestMask(cfg.paths.lung_post, post_prep.meta);
        tumor = ingestMask(cfg.paths.tumor_pre, pre_prep.meta);
        treatment = ingestMask(cfg.paths.treatment_post, post_prep.meta);
        if (tumor.empty()) throw ValidationError("tumor mask is empty after resampling");
        saveMask(lung_pre, art("lung_pre", "lung_pre.nii.gz"));
        saveMask(lung_post, art("lung_post", "lung_post.nii.gz"));
    });

    // Parenchyma-restricted intensities: HU for differencing/metrics,
    // windowed-normalized for registration.
    const Volume pre_hu = applyLungMask(pre_prep, lung_pre);
    const Volume post_hu = applyLungMask(post_prep, lung_post);
    const Volume pre_n = normalize(pre_hu, cfg.preprocess.window);
    const Volume post_n = normalize(post_hu, cfg.preprocess.window);

    // Rigid alignment, scored inside the union of the lung masks when the
    // grids coincide (they can differ in origin when the scans were not
    // acquired in the same frame; then the whole grid is used).
    RigidResult rigid;
    clock.run("rigid", [&] {
        const Mask* region = nullptr;
        Mask region_storage;
        if (lung_pre.meta == lung_post.meta) {
            region_storage = unionMask(lung_pre, lung_post);
            region = &region_storage;
        }
        rigid = registerRigid(pre_n, post_n, cfg.rigid, region);
        writeText(art("rigid_transform", "rigid_transform.json"), rigid.transform.toJson());
    });
    out.rigid_ncc = rigid.final_ncc;

    // Everything after this point lives on the postoperative grid.
    const CompositeTransform rigid_only{rigid.transform, DisplacementField::zero(post_prep.meta)};
    const Volume aligned_pre_n = applyComposite(pre_n, rigid_only);
    const Mask tumor_rigid = warpMask(tumor, rigid_only);
    const Mask lung_pre_rigid = warpMask(lung_pre, rigid_only);

    // Deformable stage; tumor (moving side) and treatment zone (fixed side)
    // are excluded from the data term so real change is not "registered away".
    DeformResult deform;
    clock.run("deformable", [&] {
        deform = registerDeformable(aligned_pre_n, post_n, &tumor_rigid, &treatment, cfg.deform);
        saveField(deform.field, art("field", "field.raw"));
    });
    out.deform_levels = deform.levels;

    // Warp the HU image and the masks with the composite transform (one
    // resampling from the original masked HU volume).
    const CompositeTransform composite{rigid.transform, std::move(deform.field)};
    Volume registered_pre_hu;
    Mask tumor_reg, lung_pre_reg;
    clock.run("warp", [&] {
        registered_pre_hu = applyComposite(pre_hu, composite);
        tumor_reg = warpMask(tumor, composite);
        lung_pre_reg = warpMask(lung_pre, composite);
        saveVolume(registered_pre_hu, art("registered_pre", "registered_pre.nii.gz"));
        saveMask(tumor_reg, art("tumor_registered", "tumor_registered.nii.gz"));
    });

    DiffVolume diff;
    clock.run("difference", [&] {
        diff = difference(post_hu, registered_pre_hu);
        saveVolume(diff, art("diff", "diff.nii.gz"));
    });

    clock.run("render", [&] {
        const RenderResult r =
            renderSlices(diff, post_prep, tumor_reg, treatment, cfg.render, cfg.paths.out_dir);
        out.artifacts["render_index"] = r.index_json;
    });

    clock.run("aes", [&] {
        std::map<std::string, std::string> provenance;
        for (const auto& [label, hash] : input_hashes) provenance[label] = hash;
        out.aes = evaluateCase(tumor_reg, treatment, cfg.aes, provenance);
        writeText(art("aes", "aes.json"), out.aes.toJson());
        if (!treatment.empty()) {
            out.hu_stats = huRegionStats(registered_pre_hu, post_hu, tumor_reg, treatment);
            writeText(art("hu_stats", "hu_stats.json"), out.hu_stats.toJson());
        }
    });

    clock.run("metrics", [&] {
        const Volume pre_on_post =
            applyComposite(pre_hu, {RigidTransform{}, DisplacementField::zero(post_prep.meta)});
        const Mask lung_pre_on_post =
            warpMask(lung_pre, {RigidTransform{}, DisplacementField::zero(post_prep.meta)});
        const Volume aligned_pre_hu = applyComposite(pre_hu, rigid_only);

        struct Row {
            const char* label;
            const Volume* vol;
            const Mask* lung;
        };
        const Row rows[] = {{"none", &pre_on_post, &lung_pre_on_post},
                            {"rigid", &aligned_pre_hu, &lung_pre_rigid},
                            {"deformable", &registered_pre_hu, &lung_pre_reg}};
        json arr = json::array();
        std::string csv = MetricReport::csvHeader() + "\n";
        for (const Row& row : rows) {
            const MetricReport in_lung = computeMetrics(*row.vol, post_hu, row.lung, &lung_post,
                                                        &lung_post, "lung");
            const MetricReport whole =
                computeMetrics(*row.vol, post_hu, row.lung, &lung_post, nullptr, "whole");
            for (const MetricReport* r : {&in_lung, &whole}) {
                json jr = json::parse(r->toJson());
                jr["label"] = row.label;
                arr.push_back(jr);
                csv += r->toCsvRow(row.label) + "\n";
                out.metrics.emplace_back(row.label, *r);
            }
        }
        writeText(art("metrics_json", "metrics.json"), arr.dump(2) + "\n");
        writeText(art("metrics_csv", "metrics.csv"), csv);
    });

    clock.run("manifest", [&] {
        json m;
        m["version"] = kVersion;
        m["threads"] = max_threads();
        m["config_hash"] = fileContentHash(config_path);
        m["inputs"] = input_hashes;
        m["rigid"] = {{"final_ncc", rigid.final_ncc}, {"identity_ncc", rigid.identity_ncc}};
        json levels = json::array();
        for (const auto& l : deform.levels)
            levels.push_back({{"node_spacing", l.node_spacing},
                              {"l_max", l.l_max},
                              {"q", l.q},
                              {"nodes", l.nodes},
                              {"energy_zero", l.energy_zero},
                              {"energy_tree", l.energy_tree},
                              {"energy_final", l.energy_final}});
        m["deform_levels"] = levels;
        json timings = json::array();
        for (const auto& [name, ms] : clock.timings())
            timings.push_back({{"stage", name}, {"ms", ms}});
        m["timings_ms"] = timings;
        m["artifacts"] = out.artifacts;
        writeText(art("manifest", "manifest.json"), m.dump(2) + "\n");
    });

    return out;
}

} // namespace ablate
