// advtex command-line front end: synthetic data, the full pipeline,
// evaluation and the ablation sweeps.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "advtex/advtex.hpp"

namespace fs = std::filesystem;
using namespace advtex;

namespace {

enum Exit { kOk = 0, kUsage = 2, kValidation = 3, kRuntime = 4 };

/// Pipeline flags shared by `pipeline` and every `ablate` mode. Unset
/// optionals leave the config-file / default value in place.
struct RunFlags {
    std::string data, out, config;
    std::optional<double> omega4, gan_weight, eval_fraction;
    std::optional<std::string> align, precision;
    std::optional<int> k, iterations, crop, threads, resolution;
    std::optional<std::uint64_t> seed;

    void add(CLI::App* app, bool with_k, bool with_align) {
        app->add_option("--data", data, "dataset directory (contains manifest.json)")->required()->check(CLI::ExistingDirectory);
        app->add_option("--out", out, "output directory")->required();
        app->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
        app->add_option("--omega4", omega4, "pairwise adjacency weight");
        if (with_align) app->add_option("--align", align, "off | global | patchwise");
        if (with_k) app->add_option("--k", k, "keep every k-th train view");
        app->add_option("--iterations", iterations, "TexSmooth steps");
        app->add_option("--crop", crop, "TexSmooth crop side, pixels");
        app->add_option("--gan-weight", gan_weight, "adversarial loss weight");
        app->add_option("--eval-fraction", eval_fraction, "held-out view fraction");
        app->add_option("--resolution", resolution, "chart side in texels (0 = resolution policy)");
        app->add_option("--seed", seed, "random seed");
        app->add_option("--threads", threads, "worker threads (default: logical cores)");
        app->add_option("--precision", precision, "float | double");
    }

    [[nodiscard]] PipelineConfig resolve() const {
        PipelineConfig c;
        c.threads = default_threads();
        if (!config.empty()) c = load_config(config, c);
        if (omega4) c.omega4 = *omega4;
        if (align) c.align = parse_align_mode(*align);
        if (k) c.k = *k;
        if (iterations) c.optim.iterations = *iterations;
        if (crop) c.optim.crop_side = *crop;
        if (gan_weight) c.optim.gan_weight = *gan_weight;
        if (eval_fraction) c.eval_fraction = *eval_fraction;
        if (resolution) c.resolution = *resolution;
        if (seed) c.seed = *seed;
        if (threads) c.threads = *threads;
        if (precision) {
            if (*precision != "float" && *precision != "double") throw ArgumentError("--precision must be float or double");
            c.precision = *precision == "double" ? Precision::Double : Precision::Float;
        }
        if (c.threads < 1) throw ArgumentError("--threads must be >= 1");
        return c;
    }
};

Scene load_dataset(const std::string& dir) { return load_scene(fs::path(dir) / "manifest.json"); }

void write_run_json(const fs::path& out, const std::string& command, const nlohmann::json& config,
                    const nlohmann::json& extra = nlohmann::json::object()) {
    fs::create_directories(out);
    nlohmann::json j = {{"command", command}, {"config", config}};
    j.update(extra);
    std::ofstream os(out / "run.json");
    if (!os) throw IoError("cannot write '" + (out / "run.json").string() + "'");
    os << j.dump(2) << '\n';
}

struct AblationRow {
    std::string variant;
    EvalReport initial, refined;
};

void write_ablation(const fs::path& path, const std::vector<AblationRow>& rows) {
    std::ostringstream ss;
    ss.precision(10);
    ss << "variant,ssim,grad,psnr,coverage,init_ssim,init_grad\n";
    for (const auto& r : rows) {
        const auto& m = r.refined.mean;
        ss << r.variant << ',' << m.ssim << ',' << m.grad << ',' << m.psnr << ',' << m.coverage << ','
           << r.initial.mean.ssim << ',' << r.initial.mean.grad << '\n';
    }
    std::ofstream os(path);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << ss.str();
    std::cout << ss.str();
}

AblationRow run_variant(const Scene& scene, const PipelineConfig& cfg, const std::string& name, const fs::path& out) {
    const PipelineResult r = run_pipeline(scene, cfg, out / name);
    std::ofstream(out / name / "run.json") << nlohmann::json{{"variant", name}, {"config", to_json(cfg)}}.dump(2) << '\n';
    std::cerr << name << ": ssim " << r.initial_report.mean.ssim << " -> " << r.report.mean.ssim << '\n';
    return {name, r.initial_report, r.report};
}

std::vector<int> parse_k_list(const std::string& s) {
    std::vector<int> ks;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int k = std::stoi(item, &used);
            if (used != item.size() || k < 1) throw std::invalid_argument(item);
            ks.push_back(k);
        } catch (const std::exception&) {
            throw ArgumentError("--k expects a comma-separated list of positive integers, got '" + s + "'");
        }
    }
    if (ks.empty()) throw ArgumentError("--k list is empty");
    return ks;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Texture reconstruction for RGBD scans"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic box-room dataset");
    std::string synth_out, texture = "checker";
    SynthSpec spec;
    int misalign = 0;
    double pose_noise = 0.0, synth_eval_fraction = 0.1;
    synth->add_option("--out", synth_out, "dataset directory")->required();
    synth->add_option("--views", spec.views, "number of frames");
    synth->add_option("--seed", spec.seed, "random seed");
    synth->add_option("--misalign", misalign, "max injected pixel shift of train frames");
    synth->add_option("--pose-noise", pose_noise, "train-pose corruption fraction");
    synth->add_option("--texture", texture, "checker | noise")->check(CLI::IsMember({"checker", "noise"}));
    synth->add_option("--width", spec.width, "frame width");
    synth->add_option("--height", spec.height, "frame height");
    synth->add_option("--focal", spec.focal, "focal length, pixels");
    synth->add_option("--subdivisions", spec.subdivisions, "quads per room face side");
    synth->add_option("--eval-fraction", synth_eval_fraction, "split used to pick the corrupted train frames");

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "split, TexInit, TexSmooth and evaluation");
    RunFlags pipe_flags;
    pipe_flags.add(pipeline, true, true);
    bool pairwise_flag = false, no_texsmooth = false;
    pipeline->add_flag("--pairwise", pairwise_flag, "use the pairwise adjacency term in TexInit");
    pipeline->add_flag("--no-texsmooth", no_texsmooth, "stop after TexInit");

    // eval
    auto* eval = app.add_subcommand("eval", "score an atlas on the held-out views");
    std::string eval_data, eval_atlas, eval_out;
    double eval_fraction = 0.1;
    eval->add_option("--data", eval_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--atlas", eval_atlas, "atlas PNG (with its .json sidecar)")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out, "metrics CSV path (default: stdout)");
    eval->add_option("--eval-fraction", eval_fraction, "held-out view fraction");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "ablation sweeps");
    ablate->require_subcommand(1);
    auto* sparsity = ablate->add_subcommand("sparsity", "one run per view stride k");
    RunFlags sparsity_flags;
    sparsity_flags.add(sparsity, false, true);
    std::string k_list = "1,2,3,4,5";
    sparsity->add_option("--k", k_list, "comma-separated strides");
    auto* pairwise = ablate->add_subcommand("pairwise", "unary vs pairwise TexInit");
    RunFlags pairwise_flags;
    pairwise_flags.add(pairwise, true, true);
    auto* align = ablate->add_subcommand("align", "off vs global vs patchwise alignment under injected shifts");
    RunFlags align_flags;
    align_flags.add(align, true, false);
    int align_misalign = 3;
    std::uint64_t misalign_seed = 7;
    align->add_option("--misalign", align_misalign, "max injected pixel shift");
    align->add_option("--misalign-seed", misalign_seed, "seed of the injected shifts");
    auto* posenoise = ablate->add_subcommand("pose-noise", "clean vs corrupted train poses");
    RunFlags pose_flags;
    pose_flags.add(posenoise, true, true);
    double fraction = 0.05;
    posenoise->add_option("--fraction", fraction, "pose corruption fraction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return e.get_exit_code() == 0 ? code : kUsage;
    }

    try {
        if (*synth) {
            spec.texture = texture == "noise" ? SynthTexture::Noise : SynthTexture::Checker;
            if (misalign < 0) throw ArgumentError("--misalign must be >= 0");
            SynthScene syn = make_scene(spec, default_threads());
            const std::uint64_t misalign_seed = spec.seed ^ 0x6d6973ULL;
            const auto shifts = inject_misalignment(syn.scene, misalign, misalign_seed, synth_eval_fraction);
            if (pose_noise > 0.0) {
                Scene split = split_views(std::move(syn.scene), synth_eval_fraction);
                split = perturb_poses(std::move(split), pose_noise, spec.seed);
                split.split = {};
                syn.scene = std::move(split);
            }
            const fs::path out = synth_out;
            save_scene(syn.scene, out);
            write_atlas(out / "gt_atlas.png", syn.gt);
            nlohmann::json js = nlohmann::json::array();
            for (const auto& s : shifts) js.push_back({s.dx, s.dy});
            write_run_json(out, "synth",
                           {{"views", spec.views}, {"seed", spec.seed}, {"texture", texture}, {"width", spec.width},
                            {"height", spec.height}, {"focal", spec.focal}, {"subdivisions", spec.subdivisions},
                            {"misalign", misalign}, {"misalign_seed", misalign_seed}, {"pose_noise", pose_noise}, {"eval_fraction", synth_eval_fraction}},
                           {{"true_shifts", js}});
            std::cerr << "wrote " << syn.scene.frames.size() << " frames to " << out << '\n';
        } else if (*pipeline) {
            PipelineConfig cfg = pipe_flags.resolve();
            if (pairwise_flag) cfg.pairwise = true;
            if (no_texsmooth) cfg.texsmooth = false;
            const fs::path out = pipe_flags.out;
            const PipelineResult r = run_pipeline(load_dataset(pipe_flags.data), cfg, out);
            write_run_json(out, "pipeline", to_json(cfg), {{"data", pipe_flags.data}});
            std::cerr << "eval ssim " << r.initial_report.mean.ssim << " (TexInit) -> " << r.report.mean.ssim
                      << " (final), grad " << r.report.mean.grad << '\n';
        } else if (*eval) {
            const Scene scene = split_views(load_dataset(eval_data), eval_fraction);
            const EvalReport r = evaluate(scene, read_atlas(eval_atlas), default_threads());
            if (eval_out.empty()) {
                write_metrics_csv(std::cout, r);
            } else {
                if (fs::path(eval_out).has_parent_path()) fs::create_directories(fs::path(eval_out).parent_path());
                write_metrics_csv(eval_out, r);
            }
        } else if (*sparsity) {
            const PipelineConfig base = sparsity_flags.resolve();
            const Scene scene = load_dataset(sparsity_flags.data);
            const fs::path out = sparsity_flags.out;
            std::vector<AblationRow> rows;
            for (int k : parse_k_list(k_list)) {
                PipelineConfig c = base;
                c.k = k;
                rows.push_back(run_variant(scene, c, "k" + std::to_string(k), out));
            }
            write_run_json(out, "ablate sparsity", to_json(base), {{"k", k_list}, {"data", sparsity_flags.data}});
            write_ablation(out / "ablation.csv", rows);
        } else if (*pairwise) {
            const PipelineConfig base = pairwise_flags.resolve();
            const Scene scene = load_dataset(pairwise_flags.data);
            const fs::path out = pairwise_flags.out;
            PipelineConfig unary = base, pair = base;
            unary.pairwise = false;
            pair.pairwise = true;
            std::vector<AblationRow> rows = {run_variant(scene, unary, "unary", out), run_variant(scene, pair, "pairwise", out)};
            write_run_json(out, "ablate pairwise", to_json(base), {{"data", pairwise_flags.data}});
            write_ablation(out / "ablation.csv", rows);
        } else if (*align) {
            const PipelineConfig base = align_flags.resolve();
            if (align_misalign < 0) throw ArgumentError("--misalign must be >= 0");
            Scene scene = load_dataset(align_flags.data);
            inject_misalignment(scene, align_misalign, misalign_seed, base.eval_fraction);
            const fs::path out = align_flags.out;
            std::vector<AblationRow> rows;
            for (AlignMode m : {AlignMode::Off, AlignMode::Global, AlignMode::Patchwise}) {
                PipelineConfig c = base;
                c.align = m;
                rows.push_back(run_variant(scene, c, to_string(m), out));
            }
            write_run_json(out, "ablate align", to_json(base),
                           {{"misalign", align_misalign}, {"misalign_seed", misalign_seed}, {"data", align_flags.data}});
            write_ablation(out / "ablation.csv", rows);
        } else if (*posenoise) {
            const PipelineConfig base = pose_flags.resolve();
            if (!(fraction >= 0.0)) throw ArgumentError("--fraction must be >= 0");
            const Scene scene = load_dataset(pose_flags.data);
            const fs::path out = pose_flags.out;
            PipelineConfig clean = base, noisy = base;
            clean.pose_noise = 0.0;
            noisy.pose_noise = fraction;
            std::vector<AblationRow> rows = {run_variant(scene, clean, "clean", out), run_variant(scene, noisy, "noisy", out)};
            write_run_json(out, "ablate pose-noise", to_json(base), {{"fraction", fraction}, {"data", pose_flags.data}});
            write_ablation(out / "ablation.csv", rows);
        }
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const IoError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
