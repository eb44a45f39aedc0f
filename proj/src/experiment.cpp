#include <filesystem>
#include <fstream>

#include "indrnn/experiment.hpp"

namespace indrnn {

namespace fs = std::filesystem;

template <class S>
std::unique_ptr<TaskT<S>> build_task(const ExperimentConfig& cfg) {
    SeededRng root(cfg.seed);
    if (cfg.task == "adding") {
        return std::make_unique<AddingTask<S>>(static_cast<std::size_t>(cfg.seq_len),
                                               static_cast<std::size_t>(cfg.batch_size),
                                               static_cast<std::size_t>(cfg.eval_size), root.child(99));
    }
    MnistDataset train = load_mnist(cfg.data_dir + "/train-images-idx3-ubyte",
                                    cfg.data_dir + "/train-labels-idx1-ubyte");
    if (cfg.task == "pmnist") train = apply_permutation(std::move(train), cfg.permute_seed);
    const std::size_t pool = static_cast<std::size_t>(cfg.downsample);
    if (cfg.validation_size > 0) {
        auto [head, tail] = split_tail(train, static_cast<std::size_t>(cfg.validation_size));
        return std::make_unique<MnistTask<S>>(std::move(head), tail,
                                              static_cast<std::size_t>(cfg.batch_size), pool);
    }
    MnistDataset test = load_mnist(cfg.data_dir + "/t10k-images-idx3-ubyte",
                                   cfg.data_dir + "/t10k-labels-idx1-ubyte");
    if (cfg.task == "pmnist") test = apply_permutation(std::move(test), cfg.permute_seed);
    return std::make_unique<MnistTask<S>>(std::move(train), test,
                                          static_cast<std::size_t>(cfg.batch_size), pool);
}

template std::unique_ptr<TaskT<double>> build_task<double>(const ExperimentConfig&);
template std::unique_ptr<TaskT<float>> build_task<float>(const ExperimentConfig&);

namespace {

template <class S>
RunSummary run_typed(const ExperimentConfig& cfg) {
    auto task = build_task<S>(cfg);

    const NetworkSpec spec = build_network_spec(cfg);
    const std::optional<RecurrentConstraint> constraint = build_constraint(cfg);
    InitOptions init;
    if (constraint) init.recurrent_hi = constraint->bound();
    SeededRng root(cfg.seed);
    Network<S> net(spec, root.child(0), init);

    FitOptions opt;
    opt.max_steps = cfg.max_steps;
    opt.eval_interval = cfg.eval_interval;
    opt.schedule.kind =
        cfg.optimizer.schedule == "plateau" ? LrSchedule::Kind::Plateau : LrSchedule::Kind::Step;
    opt.schedule.initial = cfg.optimizer.lr;
    opt.schedule.factor = cfg.optimizer.factor;
    opt.schedule.every_steps = cfg.optimizer.every_steps;
    opt.schedule.patience = cfg.optimizer.patience;
    opt.constraint = constraint;
    if (cfg.early_stop_metric >= 0.0) opt.early_stop_metric = cfg.early_stop_metric;
    opt.seed = cfg.seed;
    if (!cfg.output_dir.empty()) {
        opt.log_path = cfg.output_dir + "/metrics.jsonl";
        opt.checkpoint_dir = cfg.output_dir;
    }

    RunSummary summary;
    summary.output_dir = cfg.output_dir;
    summary.fit = fit(net, *task, opt);
    return summary;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    if (!cfg.output_dir.empty()) {
        fs::create_directories(cfg.output_dir);
        std::ofstream os(cfg.output_dir + "/config.json");
        os << experiment_config_to_json(cfg) << "\n";
        std::ofstream ns(cfg.output_dir + "/network_spec.json");
        ns << network_spec_to_json(build_network_spec(cfg)) << "\n";
    }
    if (cfg.precision == "f32") return run_typed<float>(cfg);
    return run_typed<double>(cfg);
}

}  // namespace indrnn
