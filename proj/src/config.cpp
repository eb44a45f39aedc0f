#include <fstream>
#include <sstream>

#include <json.hpp>

#include "indrnn/config.hpp"

namespace indrnn {

namespace {
using nlohmann::json;

constexpr int kConfigVersion = 1;

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <class T>
void get_if(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
        }
    }
}
}  // namespace

ExperimentConfig experiment_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: JSON parse error: ") + e.what());
    }
    reject_unknown_keys(j,
                        {"version", "name", "task", "seq_len", "batch_size", "arch", "optimizer",
                         "constraint", "seed", "precision", "max_steps", "eval_interval", "eval_size",
                         "early_stop_metric", "data_dir", "downsample", "permute_seed", "validation_size",
                         "output_dir"},
                        "config");
    if (!j.contains("version") || j["version"].get<int>() != kConfigVersion)
        throw ConfigError("config: missing or unsupported config version (expect " +
                          std::to_string(kConfigVersion) + ")");
    ExperimentConfig cfg;
    get_if(j, "name", cfg.name);
    get_if(j, "task", cfg.task);
    get_if(j, "seq_len", cfg.seq_len);
    get_if(j, "batch_size", cfg.batch_size);
    if (j.contains("arch")) {
        const json& a = j["arch"];
        reject_unknown_keys(a,
                            {"cell", "layers", "hidden", "activation", "batch_norm", "bn_placement",
                             "residual_blocks", "dropout"},
                            "arch");
        get_if(a, "cell", cfg.arch.cell);
        get_if(a, "layers", cfg.arch.layers);
        get_if(a, "hidden", cfg.arch.hidden);
        get_if(a, "activation", cfg.arch.activation);
        get_if(a, "batch_norm", cfg.arch.batch_norm);
        get_if(a, "bn_placement", cfg.arch.bn_placement);
        get_if(a, "residual_blocks", cfg.arch.residual_blocks);
        get_if(a, "dropout", cfg.arch.dropout);
    }
    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        reject_unknown_keys(o, {"lr", "schedule", "factor", "every_steps", "patience"}, "optimizer");
        get_if(o, "lr", cfg.optimizer.lr);
        get_if(o, "schedule", cfg.optimizer.schedule);
        get_if(o, "factor", cfg.optimizer.factor);
        get_if(o, "every_steps", cfg.optimizer.every_steps);
        get_if(o, "patience", cfg.optimizer.patience);
    }
    if (j.contains("constraint")) {
        const json& c = j["constraint"];
        reject_unknown_keys(c, {"enabled", "gamma", "t_eff", "mode", "epsilon_floor"}, "constraint");
        get_if(c, "enabled", cfg.constraint.enabled);
        get_if(c, "gamma", cfg.constraint.gamma);
        get_if(c, "t_eff", cfg.constraint.t_eff);
        get_if(c, "mode", cfg.constraint.mode);
        get_if(c, "epsilon_floor", cfg.constraint.epsilon_floor);
    }
    get_if(j, "seed", cfg.seed);
    get_if(j, "precision", cfg.precision);
    get_if(j, "max_steps", cfg.max_steps);
    get_if(j, "eval_interval", cfg.eval_interval);
    get_if(j, "eval_size", cfg.eval_size);
    get_if(j, "early_stop_metric", cfg.early_stop_metric);
    get_if(j, "data_dir", cfg.data_dir);
    get_if(j, "downsample", cfg.downsample);
    get_if(j, "permute_seed", cfg.permute_seed);
    get_if(j, "validation_size", cfg.validation_size);
    get_if(j, "output_dir", cfg.output_dir);
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return experiment_config_from_json(buf.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["version"] = kConfigVersion;
    j["name"] = cfg.name;
    j["task"] = cfg.task;
    j["seq_len"] = cfg.seq_len;
    j["batch_size"] = cfg.batch_size;
    j["arch"] = {{"cell", cfg.arch.cell},
                 {"layers", cfg.arch.layers},
                 {"hidden", cfg.arch.hidden},
                 {"activation", cfg.arch.activation},
                 {"batch_norm", cfg.arch.batch_norm},
                 {"bn_placement", cfg.arch.bn_placement},
                 {"residual_blocks", cfg.arch.residual_blocks},
                 {"dropout", cfg.arch.dropout}};
    j["optimizer"] = {{"lr", cfg.optimizer.lr},
                      {"schedule", cfg.optimizer.schedule},
                      {"factor", cfg.optimizer.factor},
                      {"every_steps", cfg.optimizer.every_steps},
                      {"patience", cfg.optimizer.patience}};
    j["constraint"] = {{"enabled", cfg.constraint.enabled},
                       {"gamma", cfg.constraint.gamma},
                       {"t_eff", cfg.constraint.t_eff},
                       {"mode", cfg.constraint.mode},
                       {"epsilon_floor", cfg.constraint.epsilon_floor}};
    j["seed"] = cfg.seed;
    j["precision"] = cfg.precision;
    j["max_steps"] = cfg.max_steps;
    j["eval_interval"] = cfg.eval_interval;
    j["eval_size"] = cfg.eval_size;
    j["early_stop_metric"] = cfg.early_stop_metric;
    j["data_dir"] = cfg.data_dir;
    j["downsample"] = cfg.downsample;
    j["permute_seed"] = cfg.permute_seed;
    j["validation_size"] = cfg.validation_size;
    j["output_dir"] = cfg.output_dir;
    return j.dump(2);
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.task != "adding" && cfg.task != "mnist" && cfg.task != "pmnist")
        throw ConfigError("config: unknown task '" + cfg.task + "' (expect adding|mnist|pmnist)");
    if (cfg.task == "adding" && cfg.seq_len < 2) throw ConfigError("config: seq_len must be >= 2");
    if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (cfg.arch.cell != "indrnn" && cfg.arch.cell != "rnn")
        throw ConfigError("config: unknown cell '" + cfg.arch.cell + "' (expect indrnn|rnn)");
    if (cfg.arch.layers < 0 || (cfg.arch.layers == 0 && cfg.arch.residual_blocks == 0))
        throw ConfigError("config: at least one layer or residual block required");
    if (cfg.arch.hidden < 1) throw ConfigError("config: hidden must be >= 1");
    if (cfg.arch.activation != "relu" && cfg.arch.activation != "tanh" &&
        cfg.arch.activation != "identity")
        throw ConfigError("config: unknown activation '" + cfg.arch.activation + "'");
    if (cfg.arch.bn_placement != "after" && cfg.arch.bn_placement != "before")
        throw ConfigError("config: bn_placement must be after|before");
    if (cfg.arch.residual_blocks < 0) throw ConfigError("config: residual_blocks must be >= 0");
    if (cfg.arch.dropout < 0.0 || cfg.arch.dropout >= 1.0)
        throw ConfigError("config: dropout must be in [0,1)");
    if (!(cfg.optimizer.lr > 0.0)) throw ConfigError("config: lr must be > 0");
    if (cfg.optimizer.schedule != "step" && cfg.optimizer.schedule != "plateau")
        throw ConfigError("config: schedule must be step|plateau");
    if (!(cfg.optimizer.factor > 1.0)) throw ConfigError("config: decay factor must be > 1");
    if (cfg.optimizer.every_steps < 1) throw ConfigError("config: every_steps must be >= 1");
    if (cfg.optimizer.patience < 1) throw ConfigError("config: patience must be >= 1");
    if (cfg.constraint.enabled) {
        if (!(cfg.constraint.gamma > 0.0)) throw ConfigError("config: constraint gamma must be > 0");
        if (cfg.constraint.t_eff < 0) throw ConfigError("config: constraint t_eff must be >= 0");
        if (cfg.constraint.mode != "signed" && cfg.constraint.mode != "nonnegative")
            throw ConfigError("config: constraint mode must be signed|nonnegative");
        if (cfg.constraint.epsilon_floor < 0.0)
            throw ConfigError("config: epsilon_floor must be >= 0");
    }
    if (cfg.precision != "f64" && cfg.precision != "f32")
        throw ConfigError("config: precision must be f64|f32");
    if (cfg.max_steps < 1) throw ConfigError("config: max_steps must be >= 1");
    if (cfg.eval_interval < 1) throw ConfigError("config: eval_interval must be >= 1");
    if (cfg.eval_size < 1) throw ConfigError("config: eval_size must be >= 1");
    if (cfg.downsample < 1) throw ConfigError("config: downsample must be >= 1");
    if (cfg.task != "adding" && 784 % cfg.downsample != 0)
        throw ConfigError("config: downsample must divide 784");
    if (cfg.validation_size < 0) throw ConfigError("config: validation_size must be >= 0");
}

long effective_seq_len(const ExperimentConfig& cfg) {
    if (cfg.task == "adding") return cfg.seq_len;
    return 784 / cfg.downsample;
}

NetworkSpec build_network_spec(const ExperimentConfig& cfg) {
    NetworkSpec spec;
    spec.input_size = cfg.task == "adding" ? 2 : 1;
    spec.output_size = cfg.task == "adding" ? 1 : 10;
    spec.head = HeadKind::LastStep;
    Activation act = cfg.arch.activation == "relu"   ? Activation::Relu
                     : cfg.arch.activation == "tanh" ? Activation::Tanh
                                                     : Activation::Identity;
    for (long i = 0; i < cfg.arch.layers; ++i) {
        LayerSpec l;
        l.kind = cfg.arch.cell == "indrnn" ? LayerKind::IndRnn : LayerKind::Rnn;
        l.width = static_cast<std::size_t>(cfg.arch.hidden);
        l.act = act;
        l.bn = cfg.arch.batch_norm
                   ? (cfg.arch.bn_placement == "before" ? BnPlacement::Before : BnPlacement::After)
                   : BnPlacement::None;
        l.dropout = cfg.arch.dropout;
        spec.layers.push_back(l);
    }
    for (long i = 0; i < cfg.arch.residual_blocks; ++i) {
        LayerSpec l;
        l.kind = LayerKind::Residual;
        l.width = static_cast<std::size_t>(cfg.arch.hidden);
        l.act = act;
        l.dropout = cfg.arch.dropout;
        spec.layers.push_back(l);
    }
    spec.validate();
    return spec;
}

std::optional<RecurrentConstraint> build_constraint(const ExperimentConfig& cfg) {
    if (!cfg.constraint.enabled) return std::nullopt;
    RecurrentConstraint c;
    c.gamma = cfg.constraint.gamma;
    c.t_eff = cfg.constraint.t_eff > 0 ? cfg.constraint.t_eff : effective_seq_len(cfg);
    c.epsilon_floor = cfg.constraint.epsilon_floor;
    c.nonnegative = cfg.constraint.mode == "nonnegative";
    c.validate();
    return c;
}

}  // namespace indrnn
