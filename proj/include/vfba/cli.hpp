#pragma once

// Command-line front end: `deblur`, `bench synth`, `bench eval` and `flow`.
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vfba/bench.hpp"
#include "vfba/core.hpp"
#include "vfba/fba.hpp"
#include "vfba/flow.hpp"
#include "vfba/io.hpp"
#include "vfba/pipeline.hpp"
#include "vfba/register.hpp"

namespace vfba {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

/// Reads restoration settings from a JSON object on top of `base`. Unknown keys are rejected.
inline FbaConfig apply_config_json(FbaConfig base, const nlohmann::json& j, FlowParams* flow = nullptr) {
    if (!j.is_object()) {
        throw ConfigError("configuration file must hold a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "half_window") base.half_window = value.get<int>();
        else if (key == "block_size") base.block_size = value.get<int>();
        else if (key == "stride") base.stride = value.get<int>();
        else if (key == "exponent") base.exponent = value.get<double>();
        else if (key == "spectrum_sigma") base.spectrum_sigma = value.get<double>();
        else if (key == "consistency_tolerance") base.consistency_tolerance = value.get<double>();
        else if (key == "mask_radius") base.mask_radius = value.get<int>();
        else if (key == "mask_sigma") base.mask_sigma = value.get<double>();
        else if (key == "flow_scale") base.flow_scale = value.get<double>();
        else if (key == "iterations") base.iterations = value.get<int>();
        else if (key == "sharpen_amount") base.sharpen_amount = value.get<double>();
        else if (key == "sharpen_radius") base.sharpen_radius = value.get<double>();
        else if (key == "mask_mode") base.mask_mode = parse_mask_mode(value.get<std::string>());
        else if (key == "early_stop") base.early_stop = value.get<double>();
        else if (key == "threads") base.threads = value.get<int>();
        else if (key == "flow" && flow) {
            for (const auto& [fk, fv] : value.items()) {
                if (fk == "data_weight") flow->data_weight = fv.get<double>();
                else if (fk == "tightness") flow->tightness = fv.get<double>();
                else if (fk == "time_step") flow->time_step = fv.get<double>();
                else if (fk == "warps") flow->warps = fv.get<int>();
                else if (fk == "pyramid_factor") flow->pyramid_factor = fv.get<double>();
                else if (fk == "min_level_size") flow->min_level_size = fv.get<int>();
                else if (fk == "max_inner_iters") flow->max_inner_iters = fv.get<int>();
                else if (fk == "stop_tol") flow->stop_tol = fv.get<double>();
                else if (fk == "median_filter") flow->median_filter = fv.get<bool>();
                else throw ConfigError("unknown flow setting '" + fk + "'");
            }
        } else {
            throw ConfigError("unknown configuration key '" + key + "'");
        }
    }
    return base;
}

/// Restoration flags shared by subcommands. Unset flags fall back to the
/// config file, then to default_config().
struct ConfigFlags {
    std::optional<int> half_window;
    std::optional<int> block_size;
    std::optional<int> stride;
    std::optional<double> exponent;
    std::optional<double> epsilon;
    std::optional<int> iterations;
    std::optional<double> sharpen;
    std::optional<double> flow_scale;
    std::optional<std::string> mask_mode;
    std::optional<int> threads;
    std::string config_file;

    void add_to(CLI::App& app) {
        app.add_option("--M", half_window, "Neighbors on each side of the reference frame (default 3)");
        app.add_option("--block", block_size, "Fusion block size in pixels, even (default 128)");
        app.add_option("--stride", stride, "Block stride in pixels (default 64)");
        app.add_option("--p", exponent, "Fourier weight exponent (default 11)");
        app.add_option("--epsilon", epsilon, "Round-trip consistency tolerance in pixels (default 1)");
        app.add_option("--iterations", iterations, "Number of whole-sequence passes (default 1)");
        app.add_option("--sharpen", sharpen, "Unsharp masking amount, 0 disables (default 0)");
        app.add_option("--flow-scale", flow_scale, "Resolution ratio for flow estimation (default 1/3)");
        app.add_option("--mask-mode", mask_mode, "Mask morphology: conservative or literal")
            ->check(CLI::IsMember({"conservative", "literal"}));
        app.add_option("--threads", threads, "Worker threads (default 1)");
        app.add_option("--config", config_file, "JSON configuration file")->check(CLI::ExistingFile);
    }

    [[nodiscard]] FbaConfig resolve(FlowParams* flow = nullptr) const {
        FbaConfig cfg = default_config();
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw IoError("cannot open configuration file '" + config_file + "'");
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("configuration file '" + config_file + "': " + e.what());
            }
            cfg = apply_config_json(cfg, j, flow);
        }
        if (half_window) cfg.half_window = *half_window;
        if (block_size) cfg.block_size = *block_size;
        if (stride) cfg.stride = *stride;
        if (exponent) cfg.exponent = *exponent;
        if (epsilon) cfg.consistency_tolerance = *epsilon;
        if (iterations) cfg.iterations = *iterations;
        if (sharpen) cfg.sharpen_amount = *sharpen;
        if (flow_scale) cfg.flow_scale = *flow_scale;
        if (mask_mode) cfg.mask_mode = parse_mask_mode(*mask_mode);
        if (threads) cfg.threads = *threads;
        cfg.validate();
        return cfg;
    }
};

namespace detail {

struct DeblurArgs {
    std::string input;
    std::string output;
    std::string frames;
    std::string output_pattern = "%04d.png";
    std::string diagnostics;
    bool deterministic = false;
    ConfigFlags config;
};

struct SynthArgs {
    std::string input;
    std::string output;
    std::string output_pattern = "%04d.png";
    SynthesisParams params;
    int lucky = -1;
};

struct EvalArgs {
    std::string truth;
    std::string input;
    std::string frames;
};

struct FlowArgs {
    std::string reference;
    std::string other;
    std::string output;
    ConfigFlags config;
};

inline void write_contribution_row(std::ostream& out, std::size_t frame, const RegisteredStack& stack,
                                   const WeightReport& report) {
    for (std::size_t k = 0; k < report.contributions.size(); ++k) {
        const long offset = static_cast<long>(k) - static_cast<long>(stack.ref_index);
        out << frame << ',' << offset << ',' << report.contributions[k] << '\n';
    }
}

inline int run_deblur(const DeblurArgs& args, std::ostream& out) {
    FlowParams flow;
    const FbaConfig cfg = args.config.resolve(&flow);
    SequenceSpec spec{args.input, parse_range(args.frames), args.output, args.output_pattern};
    const std::vector<Frame> frames = read_frame_sequence(spec);

    FrameObserver observer;
    std::mutex diag_mutex;
    std::ofstream contributions;
    if (!args.diagnostics.empty()) {
        const fs::path dir = args.diagnostics;
        fs::create_directories(dir / "masks");
        fs::create_directories(dir / "weights");
        contributions.open(dir / "contributions.csv");
        contributions << "frame,offset,contribution\n";
        observer = [&, dir](std::size_t index, const RegisteredStack& stack, const FusionDiagnostics& fusion) {
            const WeightReport report = summarize_weights(fusion);
            const std::size_t n = stack.frames.size();
            const int frame_no = spec.range.first + static_cast<int>(index);
            for (std::size_t i = 0; i < n; ++i) {
                const long offset = static_cast<long>(i) - static_cast<long>(stack.ref_index);
                const std::string tag = "f" + std::to_string(frame_no) + "_n" + std::to_string(offset);
                double peak = 0.0;
                for (double v : report.block_maps[i].values()) peak = std::max(peak, v);
                write_plane_image(dir / "weights" / (tag + ".png"), report.block_maps[i], peak > 0 ? peak : 1.0);
                if (i != stack.ref_index) {
                    write_plane_image(dir / "masks" / (tag + "_mask.png"), stack.masks[i].values);
                    if (stack.consistency[i]) {
                        // Saturates at twice the tolerance.
                        write_plane_image(dir / "masks" / (tag + "_cmap.png"), stack.consistency[i]->values,
                                          2.0 * std::max(cfg.consistency_tolerance, 1e-6));
                    }
                }
            }
            std::lock_guard lock(diag_mutex);
            write_contribution_row(contributions, static_cast<std::size_t>(frame_no), stack, report);
        };
    }

    const SequenceResult result = deblur_sequence(frames, cfg, flow, observer);
    const auto written = write_frame_sequence(spec, result.frames);
    if (!args.diagnostics.empty()) {
        write_iteration_csv(fs::path(args.diagnostics) / "iterations.csv", result.report);
    }
    out << "wrote " << written.size() << " frames to " << spec.output_dir.string() << '\n';
    return kExitOk;
}

inline int run_synth(const SynthArgs& args, std::ostream& out) {
    SynthesisParams params = args.params;
    if (args.lucky >= 0) params.lucky_frame = args.lucky;
    const Frame sharp = read_frame(args.input);
    const Burst burst = synthesize_burst(sharp, params);
    const fs::path dir = args.output;
    fs::create_directories(dir / "kernels");
    for (std::size_t i = 0; i < burst.frames.size(); ++i) {
        write_frame(dir / format_index(args.output_pattern, static_cast<int>(i)), burst.frames[i]);
        double peak = 0.0;
        for (double v : burst.kernels[i].weights.values()) peak = std::max(peak, v);
        write_plane_image(dir / "kernels" / format_index("kernel_%04d.png", static_cast<int>(i)),
                          burst.kernels[i].weights, peak);
    }
    std::ofstream csv(dir / "synthesis.csv");
    csv << "frame,psnr_db\n";
    for (std::size_t i = 0; i < burst.frames.size(); ++i) {
        csv << i << ',' << psnr(burst.frames[i], sharp) << '\n';
    }
    out << "wrote " << burst.frames.size() << " frames to " << dir.string() << '\n';
    return kExitOk;
}

inline int run_eval(const EvalArgs& args, std::ostream& out) {
    const FrameRange range = parse_range(args.frames);
    const bool truth_is_pattern = args.truth.find('%') != std::string::npos;
    std::optional<Frame> single_truth;
    if (!truth_is_pattern) single_truth = read_frame(args.truth);
    out << "frame,psnr_db,noise_std\n";
    double mean = 0.0;
    for (int i = range.first; i <= range.last; ++i) {
        const Frame frame = read_frame(format_index(args.input, i));
        const Frame truth = truth_is_pattern ? read_frame(format_index(args.truth, i)) : *single_truth;
        const double q = psnr(frame, truth);
        mean += q;
        out << i << ',' << q << ',' << estimate_noise_mad(frame) << '\n';
    }
    out << "mean," << mean / range.count() << ",\n";
    return kExitOk;
}

inline int run_flow(const FlowArgs& args, std::ostream& out) {
    FlowParams params;
    const FbaConfig cfg = args.config.resolve(&params);
    const Frame reference = read_frame(args.reference);
    const Frame other = read_frame(args.other);
    const FlowPair flows = estimate_flow_pair(reference, other, cfg, params);
    const ConsistencyMap cmap = roundtrip_map(flows.fwd, flows.bwd);
    SoftMask mask = binary_consistency(cmap, cfg.consistency_tolerance);
    const WarpResult warped = warp_bicubic(other, flows.fwd);
    for (std::size_t i = 0; i < mask.values.size(); ++i) {
        if (warped.oob.values.values()[i] != 0.0) mask.values.values()[i] = 0.0;
    }
    const SoftMask refined = refine_mask(mask, cfg.mask_radius, cfg.mask_sigma, cfg.mask_mode);
    const fs::path dir = args.output;
    fs::create_directories(dir);
    write_flow_flo(dir / "forward.flo", flows.fwd);
    write_flow_flo(dir / "backward.flo", flows.bwd);
    write_plane_image(dir / "cmap.png", cmap.values, 2.0 * std::max(cfg.consistency_tolerance, 1e-6));
    write_plane_image(dir / "mask.png", refined.values);
    write_frame(dir / "registered.png", blend(warped.warped, reference, refined));
    out << "wrote flow files to " << dir.string() << '\n';
    return kExitOk;
}

} // namespace detail

/// Entry point; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Video camera-shake removal by consistent registration and local Fourier burst accumulation",
                 "vfba"};
    app.require_subcommand(1);

    detail::DeblurArgs deblur;
    auto* deblur_cmd = app.add_subcommand("deblur", "Restore a numbered frame sequence");
    deblur_cmd->add_option("--input", deblur.input, "Input pattern, e.g. frames/f%04d.png")->required();
    deblur_cmd->add_option("--output", deblur.output, "Output directory")->required();
    deblur_cmd->add_option("--frames", deblur.frames, "Inclusive frame index range a..b")->required();
    deblur_cmd->add_option("--output-pattern", deblur.output_pattern, "Output file pattern inside --output");
    deblur_cmd->add_option("--diagnostics", deblur.diagnostics, "Directory for masks, weight maps and CSV reports");
    deblur_cmd->add_flag("--seedless-deterministic", deblur.deterministic,
                         "Require bit-reproducible output (always the case; accepted for scripts)");
    deblur.config.add_to(*deblur_cmd);

    auto* bench_cmd = app.add_subcommand("bench", "Synthetic bursts and quality evaluation");
    bench_cmd->require_subcommand(1);
    detail::SynthArgs synth;
    auto* synth_cmd = bench_cmd->add_subcommand("synth", "Blur a sharp image with random tremor kernels");
    synth_cmd->add_option("--input", synth.input, "Sharp source image")->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--output", synth.output, "Output directory")->required();
    synth_cmd->add_option("--output-pattern", synth.output_pattern, "Frame file pattern");
    synth_cmd->add_option("--frames", synth.params.num_frames, "Number of frames");
    synth_cmd->add_option("--kernel-size", synth.params.kernel_size, "Kernel side, odd");
    synth_cmd->add_option("--tremor-steps", synth.params.tremor_steps, "Random-walk steps per kernel");
    synth_cmd->add_option("--tremor-std", synth.params.tremor_step_std, "Random-walk step std in pixels");
    synth_cmd->add_option("--noise", synth.params.noise_std, "Gaussian noise std in [0,1] units");
    synth_cmd->add_option("--seed", synth.params.rng_seed, "Random seed");
    synth_cmd->add_option("--lucky", synth.lucky, "Index of a frame left unblurred");

    detail::EvalArgs eval;
    auto* eval_cmd = bench_cmd->add_subcommand("eval", "PSNR and noise table against ground truth");
    eval_cmd->add_option("--truth", eval.truth, "Ground-truth image or numbered pattern")->required();
    eval_cmd->add_option("--input", eval.input, "Input pattern")->required();
    eval_cmd->add_option("--frames", eval.frames, "Inclusive frame index range a..b")->required();

    detail::FlowArgs flow;
    auto* flow_cmd = app.add_subcommand("flow", "Forward/backward flow, consistency map and mask for a frame pair");
    flow_cmd->add_option("--reference", flow.reference, "Reference frame")->required()->check(CLI::ExistingFile);
    flow_cmd->add_option("--other", flow.other, "Frame to register")->required()->check(CLI::ExistingFile);
    flow_cmd->add_option("--output", flow.output, "Output directory")->required();
    flow.config.add_to(*flow_cmd);

    std::vector<std::string> argv_store{"vfba"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* failing = &app;
        for (auto* sub : {deblur_cmd, synth_cmd, eval_cmd, flow_cmd}) {
            if (sub->parsed()) failing = sub;
        }
        err << failing->help();
        return kExitUsage;
    }

    try {
        if (deblur_cmd->parsed()) return detail::run_deblur(deblur, out);
        if (synth_cmd->parsed()) return detail::run_synth(synth, out);
        if (eval_cmd->parsed()) return detail::run_eval(eval, out);
        if (flow_cmd->parsed()) return detail::run_flow(flow, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

} // namespace vfba
