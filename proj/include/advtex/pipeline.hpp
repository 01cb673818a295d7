#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "advtex/atlas.hpp"
#include "advtex/metrics.hpp"
#include "advtex/parallel.hpp"
#include "advtex/scene.hpp"
#include "advtex/texinit.hpp"
#include "advtex/texsmooth.hpp"

namespace advtex {

enum class Precision { Float, Double };

struct PipelineConfig {
    double eval_fraction = 0.1;
    int k = 1; ///< keep every k-th train view
    bool pairwise = false;
    double omega4 = 1.0;
    CueWeights cues;
    PlaneWeights planes;
    int resolution = 0; ///< chart side; 0 = from the frame resolution policy
    AlignMode align = AlignMode::Global;
    OptimConfig optim;
    double pose_noise = 0.0; ///< train-pose corruption fraction
    std::uint64_t seed = 0;
    int threads = 1;
    Precision precision = Precision::Float;
    bool texsmooth = true;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
    const auto& o = c.optim;
    return {
        {"eval_fraction", c.eval_fraction},
        {"k", c.k},
        {"pairwise", c.pairwise},
        {"omega4", c.omega4},
        {"cue_weights", {{"visibility", c.cues.visibility}, {"angle", c.cues.angle}, {"resolution", c.cues.resolution}}},
        {"plane_weights", {{"unary", c.planes.unary}, {"pairwise", c.planes.pairwise}}},
        {"resolution", c.resolution},
        {"align", to_string(c.align)},
        {"optim",
         {{"lambda0", o.lambda0},
          {"lambda_decay", o.lambda_decay},
          {"decay_every", o.decay_every},
          {"lr_texture", o.lr_texture},
          {"lr_discriminator", o.lr_discriminator},
          {"iterations", o.iterations},
          {"crop_side", o.crop_side},
          {"gan_weight", o.gan_weight},
          {"refresh_every", o.refresh_every},
          {"patch", o.patch},
          {"subpixel", o.subpixel}}},
        {"pose_noise", c.pose_noise},
        {"seed", c.seed},
        {"threads", c.threads},
        {"precision", c.precision == Precision::Double ? "double" : "float"},
        {"texsmooth", c.texsmooth},
    };
}

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
inline void merge_config(PipelineConfig& c, const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    auto take = [](const nlohmann::json& obj, const char* key, auto& field) {
        if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
    };
    const nlohmann::json known = to_json(c);
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ValidationError("unknown config key '" + key + "'");
    try {
        take(j, "eval_fraction", c.eval_fraction);
        take(j, "k", c.k);
        take(j, "pairwise", c.pairwise);
        take(j, "omega4", c.omega4);
        if (j.contains("cue_weights")) {
            const auto& w = j["cue_weights"];
            take(w, "visibility", c.cues.visibility);
            take(w, "angle", c.cues.angle);
            take(w, "resolution", c.cues.resolution);
        }
        if (j.contains("plane_weights")) {
            take(j["plane_weights"], "unary", c.planes.unary);
            take(j["plane_weights"], "pairwise", c.planes.pairwise);
        }
        take(j, "resolution", c.resolution);
        if (j.contains("align")) c.align = parse_align_mode(j["align"].get<std::string>());
        if (j.contains("optim")) {
            const auto& o = j["optim"];
            for (const auto& [key, value] : o.items())
                if (!known["optim"].contains(key)) throw ValidationError("unknown optim key '" + key + "'");
            take(o, "lambda0", c.optim.lambda0);
            take(o, "lambda_decay", c.optim.lambda_decay);
            take(o, "decay_every", c.optim.decay_every);
            take(o, "lr_texture", c.optim.lr_texture);
            take(o, "lr_discriminator", c.optim.lr_discriminator);
            take(o, "iterations", c.optim.iterations);
            take(o, "crop_side", c.optim.crop_side);
            take(o, "gan_weight", c.optim.gan_weight);
            take(o, "refresh_every", c.optim.refresh_every);
            take(o, "patch", c.optim.patch);
            take(o, "subpixel", c.optim.subpixel);
        }
        take(j, "pose_noise", c.pose_noise);
        take(j, "seed", c.seed);
        take(j, "threads", c.threads);
        if (j.contains("precision")) {
            const auto p = j["precision"].get<std::string>();
            if (p != "float" && p != "double") throw ValidationError("precision must be 'float' or 'double'");
            c.precision = p == "double" ? Precision::Double : Precision::Float;
        }
        take(j, "texsmooth", c.texsmooth);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad config value: ") + e.what());
    }
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed config '" + path.string() + "': " + e.what());
    }
    merge_config(base, j);
    return base;
}

struct PipelineResult {
    Scene scene; ///< split, subsampled, possibly pose-corrupted
    TextureAtlas initial;
    TextureAtlas refined;
    CueTable cues;
    LabelAssignment assignment;
    std::vector<std::uint8_t> sampled; ///< texels baked directly from a frame
    std::vector<TrainStepRecord> log;
    EvalReport initial_report;
    EvalReport report;
};

/// split -> pose noise -> subsample -> atlas -> cues -> assignment -> bake ->
/// TexSmooth -> evaluation. With a non-empty `out`, every artifact is written
/// there.
inline PipelineResult run_pipeline(Scene scene, const PipelineConfig& cfg, const std::filesystem::path& out = {}) {
    if (cfg.threads < 1) throw ArgumentError("threads must be >= 1");
    if (scene.frames.empty()) throw ValidationError("scene has no frames");
    PipelineResult r;
    scene = split_views(std::move(scene), cfg.eval_fraction);
    if (cfg.pose_noise > 0.0) scene = perturb_poses(std::move(scene), cfg.pose_noise, cfg.seed);
    scene = subsample_train_views(std::move(scene), cfg.k);
    if (scene.split.train.empty()) throw ValidationError("no train views after subsampling");
    r.scene = std::move(scene);
    const Scene& s = r.scene;

    const int side = cfg.resolution > 0 ? cfg.resolution : resolution_policy(s.frames);
    TextureAtlas atlas = build_atlas(s.mesh, side, axis_directions(), cfg.planes);
    r.cues = compute_cues(s, atlas, cfg.cues, {}, cfg.threads);
    if (cfg.pairwise)
        r.assignment = solve_pairwise(r.cues, triangle_adjacency(s.mesh), cfg.omega4).assignment;
    else
        r.assignment = solve_unary(r.cues);
    r.initial = bake(s, std::move(atlas), r.assignment, {}, &r.cues, &r.sampled);
    r.initial_report = evaluate(s, r.initial, cfg.threads);

    const std::filesystem::path checkpoint = out.empty() ? std::filesystem::path{} : out / "discriminator.bin";
    if (!out.empty()) std::filesystem::create_directories(out);
    if (cfg.texsmooth) {
        OptimConfig optim = cfg.optim;
        optim.seed = cfg.seed;
        TexSmoothResult ts = cfg.precision == Precision::Double
                                 ? run_texsmooth<double>(s, r.initial, optim, cfg.align, cfg.threads, checkpoint)
                                 : run_texsmooth<float>(s, r.initial, optim, cfg.align, cfg.threads, checkpoint);
        r.refined = std::move(ts.atlas);
        r.log = std::move(ts.log);
    } else {
        r.refined = r.initial;
    }
    r.report = evaluate(s, r.refined, cfg.threads);

    if (!out.empty()) {
        write_atlas(out / "atlas_init.png", r.initial);
        write_atlas(out / "atlas.png", r.refined);
        write_cues_csv(out / "cues.csv", r.cues);
        write_assignment_json(out / "assignment.json", s, r.assignment);
        write_train_log(out / "texsmooth_log.csv", r.log);
        write_metrics_csv(out / "metrics_init.csv", r.initial_report);
        write_metrics_csv(out / "metrics.csv", r.report);
    }
    return r;
}

} // namespace advtex
