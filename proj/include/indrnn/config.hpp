#pragma once

#include <cstdint>
#include <string>

#include "indrnn/network.hpp"
#include "indrnn/training.hpp"

namespace indrnn {

// Self-describing experiment configuration. One versioned JSON schema;
// unknown keys are hard errors so typos cannot silently fall back to
// defaults. The full config is copied into the run's output directory.
struct ExperimentConfig {
    std::string name = "run";
    std::string task = "adding";  // adding | mnist | pmnist
    long seq_len = 100;           // adding; mnist sequence length derives from pixels/downsample
    long batch_size = 50;

    struct Arch {
        std::string cell = "indrnn";  // indrnn | rnn
        long layers = 2;
        long hidden = 128;
        std::string activation = "relu";  // relu | tanh | identity
        bool batch_norm = false;
        std::string bn_placement = "after";  // after | before
        long residual_blocks = 0;            // appended after the stacked layers
        double dropout = 0.0;
    } arch;

    struct Optimizer {
        double lr = 2e-4;
        std::string schedule = "step";  // step | plateau
        double factor = 10.0;
        long every_steps = 20000;
        long patience = 20;
    } optimizer;

    struct Constraint {
        bool enabled = true;
        double gamma = 2.0;
        long t_eff = 0;              // 0 → the training sequence length
        std::string mode = "signed";  // signed | nonnegative
        double epsilon_floor = 0.0;
    } constraint;

    std::uint64_t seed = 1;
    std::string precision = "f64";  // f64 | f32
    long max_steps = 30000;
    long eval_interval = 200;
    long eval_size = 2000;            // adding: evaluation set size
    double early_stop_metric = -1.0;  // stop once eval metric <= this; < 0 disables

    std::string data_dir = "data/mnist";
    long downsample = 1;  // mean-pool factor over the pixel sequence
    std::uint64_t permute_seed = 42;
    long validation_size = 5000;  // mnist samples held out from train; 0 → evaluate on the test set

    std::string output_dir;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Throws ConfigError on any invalid field.
void validate_config(const ExperimentConfig& cfg);

// Training sequence length implied by the config (seq_len for adding,
// pixels/downsample for mnist).
long effective_seq_len(const ExperimentConfig& cfg);

// The network architecture implied by the config.
NetworkSpec build_network_spec(const ExperimentConfig& cfg);

// The constraint implied by the config, with t_eff defaulted to the training
// sequence length; nullopt when disabled.
std::optional<RecurrentConstraint> build_constraint(const ExperimentConfig& cfg);

}  // namespace indrnn
