// Experiment CLI: config-driven training runs, the self-verification battery,
// checkpoint analysis (neuron traces, one-neuron ablation), and parameter
// counting.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
// failure (including failed verification).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "indrnn/analysis.hpp"
#include "indrnn/experiment.hpp"
#include "indrnn/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int cmd_run(const std::string& config_path, const std::string& output_dir, long seed_override,
            long max_steps_override) {
    indrnn::ExperimentConfig cfg = indrnn::load_experiment_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (max_steps_override > 0) cfg.max_steps = max_steps_override;
    indrnn::RunSummary summary = indrnn::run_experiment(cfg);
    if (summary.fit.aborted) {
        std::cerr << "run aborted after " << summary.fit.steps_run
                  << " steps: " << summary.fit.abort_reason << "\n";
        return kExitNumeric;
    }
    std::cout.precision(10);
    std::cout << "steps: " << summary.fit.steps_run << "\n"
              << "best eval: " << summary.fit.best_eval << " (step " << summary.fit.best_step << ")\n";
    if (!summary.output_dir.empty()) std::cout << "artifacts: " << summary.output_dir << "\n";
    return kExitOk;
}

int cmd_verify() {
    indrnn::VerifyResult r = indrnn::run_verification(std::cout);
    return r.ok() ? kExitOk : kExitNumeric;
}

int cmd_count_params(const std::string& config_path, bool no_bias) {
    indrnn::ExperimentConfig cfg = indrnn::load_experiment_config(config_path);
    indrnn::ParamCountReport report = indrnn::count_params(indrnn::build_network_spec(cfg), !no_bias);
    for (const auto& e : report.per_layer) std::cout << e.name << ": " << e.count << "\n";
    std::cout << "layers total (excl. head): " << report.layers_total() << "\n"
              << "total: " << report.total << "\n";
    return kExitOk;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& traces_path, bool ablate, long neuron,
                long seq_len, long finetune_steps, std::uint64_t seed,
                const std::string& ablated_ckpt_path) {
    indrnn::Checkpoint ckpt = indrnn::load_checkpoint(ckpt_path);
    indrnn::Network<double> net(ckpt.spec, indrnn::SeededRng(0));
    indrnn::restore(net, ckpt);

    indrnn::SeededRng rng(seed);
    if (net.spec().input_size != 2)
        throw indrnn::ConfigError("analyze: only adding-problem checkpoints (2 input channels) are supported");
    const std::size_t T = static_cast<std::size_t>(seq_len);

    // Neuron traces on one freshly drawn sequence.
    indrnn::SeededRng trace_rng = rng.child(1);
    indrnn::BatchT<double> one = indrnn::gen_adding_batch<double>(T, 1, trace_rng);
    auto traces = indrnn::record_activations(net, one.x);
    if (!traces_path.empty()) {
        std::ofstream os(traces_path);
        if (!os) throw indrnn::DataError("analyze: cannot open " + traces_path);
        indrnn::write_traces(traces, os);
        std::cout << "wrote " << traces.size() << " neuron traces (" << T << " steps) to " << traces_path
                  << "\n";
    } else {
        std::cout << traces.size() << " neuron traces recorded (use --traces to write them)\n";
    }

    if (!ablate) return kExitOk;

    indrnn::SeededRng eval_rng = rng.child(2);
    indrnn::AddingTask<double> task(T, 50, 2000, eval_rng);
    const double full_mse = indrnn::evaluate(net, task.eval_batch(), false, 512);

    indrnn::Network<double> reduced = indrnn::ablate_to_one_neuron(net, neuron);
    indrnn::FitOptions opt;
    opt.max_steps = finetune_steps;
    opt.eval_interval = std::max<long>(1, finetune_steps / 10);
    opt.schedule.initial = 1e-2;
    opt.schedule.every_steps = finetune_steps + 1;  // constant lr for the 2-parameter head
    opt.seed = rng.child(3).seed();
    indrnn::FitResult ft = indrnn::fit(reduced, task, opt);
    std::cout.precision(10);
    std::cout << "full network MSE:        " << full_mse << "\n"
              << "one-neuron network MSE:  " << ft.best_eval << " (head fine-tuned "
              << ft.steps_run << " steps)\n";
    if (!ablated_ckpt_path.empty()) {
        indrnn::save_checkpoint(ablated_ckpt_path, indrnn::snapshot(reduced));
        std::cout << "reduced network saved to " << ablated_ckpt_path << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Independently recurrent sequence-learning experiments"};
    app.require_subcommand(1);

    std::string config_path, output_dir;
    long seed_override = -1, max_steps_override = 0;
    auto* run = app.add_subcommand("run", "Train per a JSON config and write run artifacts");
    run->add_option("-c,--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("-o,--output-dir", output_dir, "Override the config's output directory");
    run->add_option("--seed", seed_override, "Override the config's seed");
    run->add_option("--max-steps", max_steps_override, "Override the config's step budget");

    auto* verify = app.add_subcommand("verify", "Run the self-verification battery");

    std::string ckpt_path, traces_path, ablated_ckpt_path;
    bool ablate = false;
    long neuron = -1, seq_len = 100, finetune_steps = 3000;
    std::uint64_t analyze_seed = 7;
    auto* analyze = app.add_subcommand("analyze", "Neuron traces and one-neuron ablation of a checkpoint");
    analyze->add_option("checkpoint", ckpt_path, "Trained checkpoint")->required();
    analyze->add_option("--traces", traces_path, "Write per-neuron activation traces to this file");
    analyze->add_flag("--ablate", ablate, "Reduce to one second-layer neuron and fine-tune its head");
    analyze->add_option("--neuron", neuron, "Neuron to keep (-1 = largest |u|)");
    analyze->add_option("--seq-len", seq_len, "Sequence length for traces and evaluation")
        ->check(CLI::PositiveNumber);
    analyze->add_option("--finetune-steps", finetune_steps, "Head fine-tuning steps for --ablate");
    analyze->add_option("--seed", analyze_seed, "Seed for evaluation data");
    analyze->add_option("--save-ablated", ablated_ckpt_path, "Write the reduced network checkpoint here");

    bool no_bias = false;
    std::string count_config;
    auto* count = app.add_subcommand("count-params", "Exact parameter counts for a config's architecture");
    count->add_option("-c,--config", count_config, "Experiment config (JSON)")->required();
    count->add_flag("--no-bias", no_bias, "Count weights only, excluding biases");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, output_dir, seed_override, max_steps_override);
        if (verify->parsed()) return cmd_verify();
        if (analyze->parsed())
            return cmd_analyze(ckpt_path, traces_path, ablate, neuron, seq_len, finetune_steps,
                               analyze_seed, ablated_ckpt_path);
        if (count->parsed()) return cmd_count_params(count_config, no_bias);
    } catch (const indrnn::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const indrnn::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const indrnn::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const indrnn::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}
