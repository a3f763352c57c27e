#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "restart/errors.hpp"

namespace {

using namespace restart::cli;

struct ConfigEntry {
    std::string key;
    std::string value;
    int line = 0;
};

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Flat key = value file with one [subcommand] section per command; keys are
// the long flag names without the leading dashes.
std::map<std::string, std::vector<ConfigEntry>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw restart::ConfigError("cannot open config file '" + path + "'");

    std::map<std::string, std::vector<ConfigEntry>> sections;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trimmed(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        std::string where = path + ":" + std::to_string(lineno);
        if (t.front() == '[') {
            if (t.back() != ']')
                throw restart::ConfigError(where + ": malformed section header '" + t + "'");
            section = trimmed(t.substr(1, t.size() - 2));
            if (section.empty()) throw restart::ConfigError(where + ": empty section name");
            sections[section];
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw restart::ConfigError(where + ": expected key = value, got '" + t + "'");
        if (section.empty())
            throw restart::ConfigError(where + ": key outside a [subcommand] section");
        std::string key = trimmed(t.substr(0, eq));
        if (key.empty()) throw restart::ConfigError(where + ": empty key");
        sections[section].push_back({key, trimmed(t.substr(eq + 1)), lineno});
    }
    return sections;
}

bool parse_bool(const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return (out = false), true;
    return false;
}

// Expands --config into explicit flags spliced in right after the subcommand
// name.  Flags given on the command line win; unknown sections or keys are
// rejected outright.
std::vector<std::string> expand_config(const std::map<std::string, CLI::App*>& subs,
                                       std::vector<std::string> args) {
    std::string subcmd, config_path;
    size_t sub_pos = args.size();
    for (size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "--config") {
            if (i + 1 >= args.size()) throw restart::ConfigError("--config expects a path");
            config_path = args[++i];
        } else if (a.rfind("--config=", 0) == 0) {
            config_path = a.substr(9);
        } else if (subcmd.empty() && !a.empty() && a[0] != '-') {
            subcmd = a;
            sub_pos = i;
        }
    }
    if (config_path.empty()) return args;
    if (subcmd.empty())
        throw restart::ConfigError("--config requires a subcommand to apply to");

    auto sections = read_config_file(config_path);
    for (const auto& [name, entries] : sections) {
        auto it = subs.find(name);
        if (it == subs.end())
            throw restart::ConfigError(config_path + ": unknown section [" + name + "]");
        for (const auto& e : entries)
            if (!it->second->get_option_no_throw("--" + e.key))
                throw restart::ConfigError(config_path + ":" + std::to_string(e.line) +
                                           ": unknown key '" + e.key + "' in [" + name + "]");
    }

    auto given_on_command_line = [&](const std::string& flag) {
        for (size_t i = sub_pos + 1; i < args.size(); ++i)
            if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
        return false;
    };

    std::vector<std::string> inject;
    auto sec = sections.find(subcmd);
    if (sec != sections.end()) {
        CLI::App* sub = subs.at(subcmd);
        for (const auto& e : sec->second) {
            std::string flag = "--" + e.key;
            if (given_on_command_line(flag)) continue;
            if (sub->get_option_no_throw(flag)->get_expected_min() == 0) {
                bool value = false;
                if (!parse_bool(e.value, value))
                    throw restart::ConfigError(config_path + ":" + std::to_string(e.line) +
                                               ": '" + e.key + "' expects a boolean");
                if (value) inject.push_back(flag);
            } else {
                inject.push_back(flag);
                inject.push_back(e.value);
            }
        }
    }
    args.insert(args.begin() + sub_pos + 1, inject.begin(), inject.end());
    return args;
}

void add_common(CLI::App* sub, CommonOpts& c, bool with_overrides) {
    sub->add_option("--config", c.config_path,
                    "Config file with [subcommand] key = value sections");
    sub->add_option("--seed", c.seed, "Master seed");
    sub->add_option("--out", c.out_dir, "Output directory (must already exist)")->required();
    sub->add_option("--threads", c.threads, "Worker threads for sweep cells");
    sub->add_flag("--timings", c.timings, "Record measured wall times in the metadata");
    if (with_overrides)
        sub->add_option("--unsafe-override", c.unsafe_overrides,
                        "Override a pinned constant, KEY=VALUE "
                        "(known: rho, t-min, t-max, prior-t)");
}

void add_source(CLI::App* sub, SourceOpts& s) {
    sub->add_option("--data", s.data_path,
                    "Dataset CSV (empirical score source and reference distribution)");
    sub->add_option("--net", s.net_path, "Serialized score net file");
    sub->add_option("--perturb-eps", s.perturb_eps,
                    "Score perturbation amplitude (sup of t * ||field - base||)");
    sub->add_option("--perturb-mode", s.perturb_mode, "fixed_direction or smooth_field");
    sub->add_option("--perturb-seed", s.perturb_seed, "Perturbation direction seed");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Samplers and error-decomposition experiments for diffusion-style "
                 "generative processes over tractable score fields"};
    app.require_subcommand(1);

    DatasetOpts dataset_opt;
    TrainOpts train_opt;
    SampleOpts sample_opt;
    DecomposeOpts decompose_opt;
    SweepOpts sweep_opt;
    ParetoOpts pareto_opt;

    CLI::App* dataset = app.add_subcommand("dataset", "Generate the synthetic dataset CSV");
    add_common(dataset, dataset_opt.common, false);
    dataset->add_option("--n-points", dataset_opt.n_points, "Dataset size");
    dataset->add_option("--base-dim", dataset_opt.base_dim, "Mixture dimension before embedding");
    dataset->add_option("--ambient-dim", dataset_opt.ambient_dim, "Embedded dimension");
    dataset->add_option("--weight-pos", dataset_opt.weight_pos, "Mass of the + component");
    dataset->add_option("--offset", dataset_opt.offset, "Component mean magnitude");
    dataset->add_option("--component-std", dataset_opt.component_std, "Component std");

    CLI::App* train = app.add_subcommand("train", "Train the score net on a dataset");
    add_common(train, train_opt.common, false);
    train->add_option("--data", train_opt.data_path, "Dataset CSV")->required();
    train->add_option("--iterations", train_opt.iterations, "SGD iterations");
    train->add_option("--batch", train_opt.batch, "Batch size");
    train->add_option("--lr", train_opt.lr, "Learning rate");
    train->add_option("--clip-norm", train_opt.clip_norm, "Gradient norm clip");
    train->add_option("--hidden", train_opt.hidden, "Hidden layer width");
    train->add_option("--t-lo", train_opt.t_lo, "Lowest training noise level");
    train->add_option("--t-hi", train_opt.t_hi, "Highest training noise level");
    train->add_option("--log-interval", train_opt.log_interval, "Iterations per loss row");

    CLI::App* sample =
        app.add_subcommand("sample", "Run a sampler from the prior down to zero");
    add_common(sample, sample_opt.common, true);
    add_source(sample, sample_opt.source);
    sample->add_option("--sampler", sample_opt.sampler, "ode, sde, improved_sde or restart")
        ->required();
    sample->add_option("--n", sample_opt.n, "Number of trajectories");
    sample->add_option("--steps", sample_opt.steps, "Main grid points");
    sample->add_option("--solver", sample_opt.solver, "Main solver, euler or heun");
    sample->add_option("--restart-solver", sample_opt.restart_solver, "Restart leg solver");
    sample->add_option("--noise-mult", sample_opt.noise_mult, "SDE noise multiplier m");
    sample->add_option("--s-churn", sample_opt.s_churn, "Churn budget (improved_sde)");
    sample->add_option("--s-noise", sample_opt.s_noise, "Injected-noise inflation");
    sample->add_option("--restart-steps", sample_opt.restart_steps, "Points per restart leg");
    sample->add_option("--k", sample_opt.k, "Restart iterations");
    sample->add_option("--restart-tmin", sample_opt.restart_tmin, "Restart interval bottom");
    sample->add_option("--restart-tmax", sample_opt.restart_tmax, "Restart interval top");

    CLI::App* decompose = app.add_subcommand(
        "decompose", "Split endpoint error into contracted and additional parts");
    add_common(decompose, decompose_opt.common, true);
    add_source(decompose, decompose_opt.source);
    decompose->add_option("--sampler", decompose_opt.sampler, "ode, sde, improved_sde or restart")
        ->required();
    decompose->add_option("--window", decompose_opt.window, "Sampler window T_MIN:T_MAX");
    decompose->add_option("--steps", decompose_opt.steps, "Window grid points (ode/sde)");
    decompose->add_option("--solver", decompose_opt.solver, "Window solver, euler or heun");
    decompose->add_option("--noise-mult", decompose_opt.noise_mult, "SDE noise multiplier m");
    decompose->add_option("--s-churn", decompose_opt.s_churn, "Churn budget (improved_sde)");
    decompose->add_option("--s-noise", decompose_opt.s_noise, "Injected-noise inflation");
    decompose->add_option("--down-steps", decompose_opt.down_steps,
                          "Window grid points of the restart main process");
    decompose->add_option("--restart-steps", decompose_opt.restart_steps,
                          "Points per restart leg");
    decompose->add_option("--k", decompose_opt.k, "Restart iterations");
    decompose->add_option("--steps-before", decompose_opt.steps_before,
                          "ODE steps from the prior down to the window");
    decompose->add_option("--steps-after", decompose_opt.steps_after,
                          "ODE steps from the window down to the endpoint");
    decompose->add_option("--n-samples", decompose_opt.n_samples, "Population size");

    CLI::App* sweep = app.add_subcommand("sweep", "Run decompose over a grid of samplers");
    add_common(sweep, sweep_opt.common, true);
    add_source(sweep, sweep_opt.source);
    sweep->add_option("--grid", sweep_opt.grid,
                      "tiny, smoke, ode, sde, restart, improved or all");
    sweep->add_option("--window", sweep_opt.window, "Sampler window T_MIN:T_MAX");
    sweep->add_option("--steps-before", sweep_opt.steps_before,
                      "ODE steps from the prior down to the window");
    sweep->add_option("--steps-after", sweep_opt.steps_after,
                      "ODE steps from the window down to the endpoint");
    sweep->add_option("--n-samples", sweep_opt.n_samples, "Population size per cell");
    sweep->add_option("--reps", sweep_opt.reps, "Seed repetitions averaged per cell");

    CLI::App* pareto =
        app.add_subcommand("pareto", "Rank sweep records and plot the frontier");
    add_common(pareto, pareto_opt.common, false);
    pareto->add_option("--in", pareto_opt.in_path, "Sweep CSV")->required();
    pareto->add_option("--x-key", pareto_opt.x_key, "Cost column");
    pareto->add_option("--y-key", pareto_opt.y_key, "Error column");

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        std::map<std::string, CLI::App*> subs = {{"dataset", dataset}, {"train", train},
                                                 {"sample", sample},   {"decompose", decompose},
                                                 {"sweep", sweep},     {"pareto", pareto}};
        args = expand_config(subs, args);
        std::vector<std::string> full;
        full.push_back(argv[0]);
        full.insert(full.end(), args.begin(), args.end());
        std::vector<char*> ptrs;
        ptrs.reserve(full.size());
        for (auto& a : full) ptrs.push_back(a.data());
        app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*dataset) return cmd_dataset(dataset_opt);
        if (*train) return cmd_train(train_opt);
        if (*sample) return cmd_sample(sample_opt);
        if (*decompose) return cmd_decompose(decompose_opt);
        if (*sweep) return cmd_sweep(sweep_opt);
        if (*pareto) return cmd_pareto(pareto_opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
