#pragma once

#include <memory>

#include "indrnn/config.hpp"
#include "indrnn/tasks.hpp"

namespace indrnn {

struct RunSummary {
    FitResult fit;
    std::string output_dir;
};

// Builds the task implied by the config. For mnist/pmnist this reads the IDX
// files train-images-idx3-ubyte / train-labels-idx1-ubyte (and the t10k pair
// when validation_size is 0) from cfg.data_dir; files are never downloaded.
template <class S>
std::unique_ptr<TaskT<S>> build_task(const ExperimentConfig& cfg);

// Executes the full run: validates, creates the output directory, writes the
// config copy, trains, and leaves metrics.jsonl plus best/final checkpoints
// behind. The run directory is self-describing.
RunSummary run_experiment(const ExperimentConfig& cfg);

extern template std::unique_ptr<TaskT<double>> build_task<double>(const ExperimentConfig&);
extern template std::unique_ptr<TaskT<float>> build_task<float>(const ExperimentConfig&);

}  // namespace indrnn
