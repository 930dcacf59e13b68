// Command-line front end: phantom generation, the individual processing
// stages, and the end-to-end pipeline. Exit codes: 0 success, 2 invalid
// input/usage, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "ablate/aes.hpp"
#include "ablate/deform.hpp"
#include "ablate/diff.hpp"
#include "ablate/error.hpp"
#include "ablate/io.hpp"
#include "ablate/lungseg.hpp"
#include "ablate/metrics.hpp"
#include "ablate/parallel.hpp"
#include "ablate/phantom.hpp"
#include "ablate/pipeline.hpp"
#include "ablate/rigid.hpp"
#include "ablate/warp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string readTextFile(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ablate::ValidationError("cannot read " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void writeTextFile(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ablate::Error("cannot write " + path);
    out << text;
}

ablate::Vec3 parseVec3(const std::vector<double>& v, const char* what) {
    if (v.size() != 3)
        throw ablate::ValidationError(std::string(what) + " needs exactly 3 values");
    return {v[0], v[1], v[2]};
}

// --- phantom ---------------------------------------------------------------

struct PhantomArgs {
    std::string out_dir;
    std::uint64_t seed = 17;
    int dim = 96;
    double spacing = 1.25;
    bool no_tumor = false;
    int vessels = 12;
    int smooth_passes = 0;
    double breath_mm = 0.0;
    bool ablate_zone = false;
    double zone_radius = 15.0;
    std::vector<double> ablation_offset{0, 0, 0};
};

int runPhantom(const PhantomArgs& a) {
    ablate::PhantomConfig cfg;
    cfg.seed = a.seed;
    cfg.dims = {a.dim, a.dim, a.dim};
    cfg.spacing = {a.spacing, a.spacing, a.spacing};
    cfg.with_tumor = !a.no_tumor;
    cfg.vessels_per_lung = a.vessels;
    cfg.smooth_passes = a.smooth_passes;
    cfg.validate();

    fs::create_directories(a.out_dir);
    const auto at = [&](const char* name) { return (fs::path(a.out_dir) / name).string(); };

    const ablate::Phantom ph = ablate::makePhantom(cfg);
    ablate::saveVolume(ph.volume, at("pre.nii.gz"));
    ablate::saveMask(ph.lung, at("lung.nii.gz"));
    if (!ph.tumor.empty()) ablate::saveMask(ph.tumor, at("tumor.nii.gz"));

    json manifest;
    manifest["seed"] = cfg.seed;
    manifest["dims"] = {cfg.dims.x, cfg.dims.y, cfg.dims.z};
    manifest["spacing"] = {cfg.spacing.x, cfg.spacing.y, cfg.spacing.z};
    manifest["with_tumor"] = cfg.with_tumor;
    manifest["files"] = {{"pre", at("pre.nii.gz")}, {"lung", at("lung.nii.gz")}};
    if (!ph.tumor.empty()) manifest["files"]["tumor"] = at("tumor.nii.gz");

    ablate::Volume post = ph.volume;
    if (a.breath_mm > 0) {
        const auto field = ablate::SyntheticField::respiratory(a.breath_mm, cfg);
        auto [deformed, truth] = ablate::applySyntheticField(ph.volume, field);
        post = std::move(deformed);
        ablate::saveField(truth, at("field_true.raw"));
        manifest["breath_mm"] = a.breath_mm;
        manifest["files"]["field_true"] = at("field_true.raw");
    }
    if (a.ablate_zone) {
        if (ph.tumor.empty())
            throw ablate::ValidationError("--ablate needs a tumor (drop --no-tumor)");
        ablate::AblationSpec spec;
        spec.zone_radius_mm = a.zone_radius;
        spec.center_offset_mm = parseVec3(a.ablation_offset, "--ablation-offset");
        auto [treated, zone] = ablate::simulateAblation(post, ph.tumor, spec);
        post = std::move(treated);
        ablate::saveMask(zone, at("treatment.nii.gz"));
        manifest["zone_radius_mm"] = a.zone_radius;
        manifest["files"]["treatment"] = at("treatment.nii.gz");
    }
    if (a.breath_mm > 0 || a.ablate_zone) {
        ablate::saveVolume(post, at("post.nii.gz"));
        manifest["files"]["post"] = at("post.nii.gz");
    }
    writeTextFile(at("phantom_manifest.json"), manifest.dump(2) + "\n");
    std::cout << manifest.dump(2) << "\n";
    return 0;
}

// --- pipeline --------------------------------------------------------------

int runPipelineCmd(const std::string& config_path, const std::string& out_dir_override) {
    ablate::PipelineConfig cfg = ablate::PipelineConfig::fromJsonFile(config_path);
    if (!out_dir_override.empty()) cfg.paths.out_dir = out_dir_override;
    const ablate::PipelineOutputs out = ablate::runPipeline(cfg);
    std::cout << out.aes.toJson() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lung CT change assessment: registration, respiratory differencing, "
                 "and ablation effectiveness scoring"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (0 = hardware default)");

    // phantom
    PhantomArgs pa;
    CLI::App* sc_phantom =
        app.add_subcommand("phantom", "generate a synthetic chest volume with masks");
    sc_phantom->add_option("--out-dir", pa.out_dir, "output directory")->required();
    sc_phantom->add_option("--seed", pa.seed, "noise seed (default 17)");
    sc_phantom->add_option("--dim", pa.dim, "cubic grid edge in voxels (default 96)");
    sc_phantom->add_option("--spacing", pa.spacing, "isotropic spacing in mm (default 1.25)");
    sc_phantom->add_flag("--no-tumor", pa.no_tumor, "omit the tumor");
    sc_phantom->add_option("--vessels", pa.vessels, "vessel tubes per lung (default 12)");
    sc_phantom->add_option("--smooth", pa.smooth_passes,
                           "3^3 box smoothing passes, a scanner-PSF analog (default 0)");
    sc_phantom->add_option("--breath-mm", pa.breath_mm,
                           "peak respiratory displacement; emits post.nii.gz + field_true.raw");
    sc_phantom->add_flag("--ablate", pa.ablate_zone, "stamp an ablation zone into post.nii.gz");
    sc_phantom->add_option("--zone-radius", pa.zone_radius, "ablation zone radius in mm");
    sc_phantom
        ->add_option("--ablation-offset", pa.ablation_offset,
                     "zone center offset from the tumor centroid (mm)")
        ->expected(3);

    // segment-lung
    std::string sl_in, sl_out, sl_masked;
    ablate::LungSegConfig sl_cfg;
    bool sl_no_fill = false;
    CLI::App* sc_seg = app.add_subcommand("segment-lung", "threshold+morphology lung mask");
    sc_seg->add_option("--in", sl_in, "input HU volume")->required();
    sc_seg->add_option("--out", sl_out, "output mask path")->required();
    sc_seg->add_option("--air-threshold", sl_cfg.air_threshold_hu, "HU threshold (default -320)");
    sc_seg->add_option("--min-volume", sl_cfg.min_component_mm3,
                       "minimum component volume in mm^3 (default 50000)");
    sc_seg->add_option("--closing-mm", sl_cfg.closing_radius_mm, "closing radius (default 3)");
    sc_seg->add_flag("--no-fill-holes", sl_no_fill, "skip per-slice hole filling");
    sc_seg->add_option("--masked-out", sl_masked, "also write the lung-masked volume here");

    // register-rigid
    std::string rr_moving, rr_fixed, rr_region, rr_out, rr_report;
    ablate::RigidRegConfig rr_cfg;
    CLI::App* sc_rigid = app.add_subcommand("register-rigid", "NCC rigid alignment");
    sc_rigid->add_option("--moving", rr_moving, "volume to align")->required();
    sc_rigid->add_option("--fixed", rr_fixed, "reference volume")->required();
    sc_rigid->add_option("--region", rr_region, "similarity mask on the fixed grid");
    sc_rigid->add_option("--out", rr_out, "output transform JSON")->required();
    sc_rigid->add_option("--report", rr_report, "also write the score report here");
    sc_rigid->add_option("--levels", rr_cfg.pyramid_levels, "pyramid levels (default 3)");
    sc_rigid->add_option("--max-iters", rr_cfg.max_iters_per_level,
                         "pattern-search sweeps per level (default 100)");

    // register-deform
    std::string rd_moving, rd_fixed, rd_xm, rd_xf, rd_out, rd_report, rd_levels;
    ablate::DeformConfig rd_cfg;
    CLI::App* sc_deform =
        app.add_subcommand("register-deform", "discrete deformable registration");
    sc_deform->add_option("--moving", rd_moving, "volume to deform (already rigidly aligned)")
        ->required();
    sc_deform->add_option("--fixed", rd_fixed, "reference volume")->required();
    sc_deform->add_option("--exclude-moving", rd_xm, "moving-side exclusion mask (e.g. tumor)");
    sc_deform->add_option("--exclude-fixed", rd_xf, "fixed-side exclusion mask (e.g. treatment)");
    sc_deform->add_option("--out-field", rd_out, "output displacement field (.raw)")->required();
    sc_deform->add_option("--report", rd_report, "write per-level energy report JSON here");
    sc_deform->add_option("--alpha", rd_cfg.alpha, "regularization weight (default 1.6)");
    sc_deform->add_option("--levels", rd_levels,
                          "levels as \"spacing,l_max,q;...\" (default \"8,6,2;6,4,1;4,2,1\")");

    // warp
    std::string w_in, w_out, w_field, w_transform;
    bool w_mask = false;
    CLI::App* sc_warp = app.add_subcommand("warp", "apply rigid and/or deformable transform");
    sc_warp->add_option("--in", w_in, "input volume or mask")->required();
    sc_warp->add_option("--out", w_out, "output path")->required();
    sc_warp->add_option("--field", w_field, "displacement field (.raw); defines the output grid");
    sc_warp->add_option("--transform", w_transform, "rigid transform JSON");
    sc_warp->add_flag("--mask", w_mask, "treat the input as a binary mask (nearest neighbor)");

    // diff
    std::string d_post, d_pre, d_out, d_render, d_tumor, d_treat;
    ablate::RenderConfig d_cfg;
    CLI::App* sc_diff = app.add_subcommand("diff", "change volume and HSV slice maps");
    sc_diff->add_option("--post", d_post, "postoperative volume")->required();
    sc_diff->add_option("--pre", d_pre, "registered preoperative volume")->required();
    sc_diff->add_option("--out", d_out, "output difference volume")->required();
    sc_diff->add_option("--render-dir", d_render, "emit slice PNGs into this directory");
    sc_diff->add_option("--tumor", d_tumor, "registered tumor mask (yellow contour)");
    sc_diff->add_option("--treatment", d_treat, "treatment mask (blue contour)");
    sc_diff->add_option("--axis", d_cfg.slice_axis, "slice axis 0/1/2 (default 2 = axial)");
    sc_diff->add_option("--window", d_cfg.diff_window, "full-saturation |change| (default 400)");
    sc_diff->add_flag("--all-slices", d_cfg.all_slices, "render every slice");
    sc_diff->add_option("--prefix", d_cfg.prefix, "output file prefix (default \"case\")");

    // aes
    std::string a_tumor, a_treat, a_out;
    ablate::AESParams a_params;
    CLI::App* sc_aes = app.add_subcommand("aes", "ablation effectiveness score");
    sc_aes->add_option("--tumor", a_tumor, "registered tumor mask")->required();
    sc_aes->add_option("--treatment", a_treat, "treatment mask (same grid)")->required();
    sc_aes->add_option("--margin", a_params.margin_mm, "planning margin in mm (default 5)");
    sc_aes->add_option("--alpha", a_params.alpha, "under-branch CR1 weight (default 1)");
    sc_aes->add_option("--beta", a_params.beta, "under-branch ER weight (default 2)");
    sc_aes->add_option("--gamma", a_params.gamma, "over-branch CR2 weight (default 0.5)");
    sc_aes->add_option("--theta", a_params.theta, "over-branch ER weight (default 2)");
    sc_aes->add_option("--lambda", a_params.lambda, "branch/classification threshold (default 0.75)");
    sc_aes->add_option("--out", a_out, "also write the report here");

    // metrics
    std::string m_a, m_b, m_lung_a, m_lung_b, m_region, m_label = "pair", m_out, m_csv;
    CLI::App* sc_metrics = app.add_subcommand("metrics", "NCC / SSIM / RMSE / Dice report");
    sc_metrics->add_option("--a", m_a, "first volume")->required();
    sc_metrics->add_option("--b", m_b, "second volume (same grid)")->required();
    sc_metrics->add_option("--lung-a", m_lung_a, "lung mask of a (for Dice)");
    sc_metrics->add_option("--lung-b", m_lung_b, "lung mask of b (for Dice)");
    sc_metrics->add_option("--region", m_region, "restrict NCC/RMSE to this mask");
    sc_metrics->add_option("--label", m_label, "row label (default \"pair\")");
    sc_metrics->add_option("--out", m_out, "also write the JSON report here");
    sc_metrics->add_option("--csv", m_csv, "also append a CSV row (with header) here");

    // pipeline
    std::string p_config, p_out_dir;
    bool p_print = false;
    CLI::App* sc_pipe = app.add_subcommand("pipeline", "end-to-end case evaluation");
    sc_pipe->add_option("--config", p_config, "pipeline config JSON");
    sc_pipe->add_option("--out-dir", p_out_dir, "override paths.out_dir");
    sc_pipe->add_flag("--print-config", p_print, "print the default config template and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (threads > 0) ablate::set_max_threads(threads);

        if (*sc_phantom) return runPhantom(pa);

        if (*sc_seg) {
            sl_cfg.fill_holes = !sl_no_fill;
            const ablate::Volume vol = ablate::loadVolume(sl_in);
            const ablate::Mask lung = ablate::segmentLung(vol, sl_cfg);
            ablate::saveMask(lung, sl_out);
            if (!sl_masked.empty())
                ablate::saveVolume(ablate::applyLungMask(vol, lung), sl_masked);
            std::cout << json{{"voxels", lung.count()}, {"volume_mm3", lung.volumeMm3()}}.dump()
                      << "\n";
            return 0;
        }

        if (*sc_rigid) {
            const ablate::Volume moving = ablate::loadVolume(rr_moving);
            const ablate::Volume fixed = ablate::loadVolume(rr_fixed);
            std::optional<ablate::Mask> region;
            if (!rr_region.empty()) region = ablate::ingestMask(rr_region, fixed.meta);
            const ablate::RigidResult res =
                ablate::registerRigid(moving, fixed, rr_cfg, region ? &*region : nullptr);
            writeTextFile(rr_out, res.transform.toJson());
            const json report{{"final_ncc", res.final_ncc},
                              {"identity_ncc", res.identity_ncc},
                              {"transform", rr_out}};
            if (!rr_report.empty()) writeTextFile(rr_report, report.dump(2) + "\n");
            std::cout << report.dump(2) << "\n";
            return 0;
        }

        if (*sc_deform) {
            if (!rd_levels.empty()) {
                rd_cfg.levels.clear();
                std::string spec = rd_levels;
                for (std::size_t start = 0; start <= spec.size();) {
                    const std::size_t end = std::min(spec.find(';', start), spec.size());
                    int s = 0, l = 0, q = 0;
                    if (std::sscanf(spec.substr(start, end - start).c_str(), "%d,%d,%d", &s, &l,
                                    &q) != 3)
                        throw ablate::ValidationError(
                            "--levels expects \"spacing,l_max,q\" triples separated by ';'");
                    rd_cfg.levels.push_back({s, l, q});
                    start = end + 1;
                }
            }
            const ablate::Volume moving = ablate::loadVolume(rd_moving);
            const ablate::Volume fixed = ablate::loadVolume(rd_fixed);
            std::optional<ablate::Mask> xm, xf;
            if (!rd_xm.empty()) xm = ablate::ingestMask(rd_xm, moving.meta);
            if (!rd_xf.empty()) xf = ablate::ingestMask(rd_xf, fixed.meta);
            const ablate::DeformResult res = ablate::registerDeformable(
                moving, fixed, xm ? &*xm : nullptr, xf ? &*xf : nullptr, rd_cfg);
            ablate::saveField(res.field, rd_out);
            json levels = json::array();
            for (const auto& l : res.levels)
                levels.push_back({{"node_spacing", l.node_spacing},
                                  {"l_max", l.l_max},
                                  {"q", l.q},
                                  {"nodes", l.nodes},
                                  {"energy_zero", l.energy_zero},
                                  {"energy_tree", l.energy_tree},
                                  {"energy_final", l.energy_final}});
            const json report{{"field", rd_out}, {"levels", levels}};
            if (!rd_report.empty()) writeTextFile(rd_report, report.dump(2) + "\n");
            std::cout << report.dump(2) << "\n";
            return 0;
        }

        if (*sc_warp) {
            if (w_field.empty() && w_transform.empty())
                throw ablate::ValidationError("warp needs --field and/or --transform");
            ablate::CompositeTransform T;
            if (!w_transform.empty())
                T.rigid = ablate::RigidTransform::fromJson(readTextFile(w_transform));
            if (!w_field.empty()) {
                T.field = ablate::loadField(w_field);
            } else {
                const ablate::GridMeta grid = w_mask ? ablate::loadMask(w_in).meta
                                                     : ablate::loadVolume(w_in).meta;
                T.field = ablate::DisplacementField::zero(grid);
            }
            if (w_mask)
                ablate::saveMask(ablate::warpMask(ablate::loadMask(w_in), T), w_out);
            else
                ablate::saveVolume(ablate::applyComposite(ablate::loadVolume(w_in), T), w_out);
            return 0;
        }

        if (*sc_diff) {
            const ablate::Volume post = ablate::loadVolume(d_post);
            const ablate::Volume pre = ablate::loadVolume(d_pre);
            const ablate::DiffVolume diff = ablate::difference(post, pre);
            ablate::saveVolume(diff, d_out);
            json report{{"diff", d_out}};
            if (!d_render.empty()) {
                ablate::Mask tumor = d_tumor.empty() ? ablate::Mask::filled(post.meta, 0)
                                                     : ablate::ingestMask(d_tumor, post.meta);
                ablate::Mask treat = d_treat.empty() ? ablate::Mask::filled(post.meta, 0)
                                                     : ablate::ingestMask(d_treat, post.meta);
                if (d_tumor.empty() && d_treat.empty()) d_cfg.all_slices = true;
                const ablate::RenderResult r =
                    ablate::renderSlices(diff, post, tumor, treat, d_cfg, d_render);
                report["slices"] = r.slices.size();
                report["index"] = r.index_json;
            }
            std::cout << report.dump(2) << "\n";
            return 0;
        }

        if (*sc_aes) {
            const ablate::Mask tumor = ablate::loadMask(a_tumor);
            const ablate::Mask treatment = ablate::ingestMask(a_treat, tumor.meta);
            const std::map<std::string, std::string> prov{
                {"tumor", a_tumor + " fnv1a:" + ablate::fileContentHash(a_tumor)},
                {"treatment", a_treat + " fnv1a:" + ablate::fileContentHash(a_treat)}};
            const ablate::AESReport report = ablate::evaluateCase(tumor, treatment, a_params, prov);
            if (!a_out.empty()) writeTextFile(a_out, report.toJson());
            std::cout << report.toJson() << "\n";
            return 0;
        }

        if (*sc_metrics) {
            const ablate::Volume a = ablate::loadVolume(m_a);
            const ablate::Volume b = ablate::loadVolume(m_b);
            std::optional<ablate::Mask> lung_a, lung_b, region;
            if (!m_lung_a.empty()) lung_a = ablate::ingestMask(m_lung_a, a.meta);
            if (!m_lung_b.empty()) lung_b = ablate::ingestMask(m_lung_b, b.meta);
            if (!m_region.empty()) region = ablate::ingestMask(m_region, b.meta);
            const ablate::MetricReport r = ablate::computeMetrics(
                a, b, lung_a ? &*lung_a : nullptr, lung_b ? &*lung_b : nullptr,
                region ? &*region : nullptr, m_region.empty() ? "whole" : "region");
            if (!m_out.empty()) writeTextFile(m_out, r.toJson() + "\n");
            if (!m_csv.empty())
                writeTextFile(m_csv,
                              ablate::MetricReport::csvHeader() + "\n" + r.toCsvRow(m_label) + "\n");
            std::cout << r.toJson() << "\n";
            return 0;
        }

        if (*sc_pipe) {
            if (p_print) {
                std::cout << ablate::PipelineConfig{}.toJson();
                return 0;
            }
            if (p_config.empty())
                throw ablate::ValidationError("pipeline needs --config (or --print-config)");
            return runPipelineCmd(p_config, p_out_dir);
        }
    } catch (const ablate::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ablate::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ablate::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
