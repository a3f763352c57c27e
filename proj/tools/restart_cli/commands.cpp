#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "restart/errors.hpp"
#include "restart/experiments.hpp"
#include "restart/io.hpp"
#include "restart/mlp.hpp"
#include "restart/rng.hpp"
#include "restart/samplers.hpp"

namespace restart::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct WallTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start)
            .count();
    }
};

double parse_number(const std::string& text, const std::string& what) {
    const char* s = text.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw ConfigError(what + " is not a number: '" + text + "'");
    return v;
}

// Pinned constants of the sampling setup; changing one requires the explicit
// override flag so it can never happen by accident.
struct Overrides {
    double rho = 7.0;
    double t_min = 0.002;   // full-run grid endpoints
    double t_max = 80.0;
    double prior_t = 5.0;   // pipeline start time for decompose/sweep
    std::vector<std::string> applied;
};

Overrides parse_overrides(const std::vector<std::string>& pairs) {
    Overrides ov;
    for (const auto& pair : pairs) {
        auto eq = pair.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--unsafe-override expects KEY=VALUE, got '" + pair + "'");
        std::string key = pair.substr(0, eq);
        double value = parse_number(pair.substr(eq + 1), "override '" + key + "'");
        if (key == "rho")
            ov.rho = value;
        else if (key == "t-min")
            ov.t_min = value;
        else if (key == "t-max")
            ov.t_max = value;
        else if (key == "prior-t")
            ov.prior_t = value;
        else
            throw ConfigError("--unsafe-override does not recognize '" + key +
                              "' (known: rho, t-min, t-max, prior-t)");
        ov.applied.push_back(pair);
    }
    return ov;
}

void append_overrides(std::vector<std::string>& args, const Overrides& ov) {
    for (const auto& pair : ov.applied) {
        args.push_back("--unsafe-override");
        args.push_back(pair);
    }
}

fs::path require_out_dir(const std::string& dir) {
    if (dir.empty()) throw ConfigError("--out is required");
    fs::path p(dir);
    if (!fs::is_directory(p))
        throw ConfigError("output directory '" + dir + "' does not exist");
    return p;
}

Window parse_window(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
        throw ConfigError("--window expects T_MIN:T_MAX, got '" + text + "'");
    Window w;
    w.t_min = parse_number(text.substr(0, colon), "window t_min");
    w.t_max = parse_number(text.substr(colon + 1), "window t_max");
    if (!(w.t_min > 0.0) || !(w.t_max > w.t_min))
        throw ConfigError("--window requires 0 < t_min < t_max, got '" + text + "'");
    return w;
}

std::string window_text(const Window& w) {
    return io::format_double(w.t_min) + ":" + io::format_double(w.t_max);
}

PerturbMode perturb_mode_from_string(const std::string& name) {
    if (name == "fixed_direction") return PerturbMode::fixed_direction;
    if (name == "smooth_field") return PerturbMode::smooth_field;
    throw ConfigError("unknown perturb mode '" + name +
                      "' (known: fixed_direction, smooth_field)");
}

// Dataset plus the score field built from the chosen source.  The dataset
// pointer is null when only --net was given.
struct LoadedSource {
    std::shared_ptr<EmpiricalDataset> dataset;
    std::shared_ptr<const ScoreField> field;
};

LoadedSource load_source(const SourceOpts& src, bool need_dataset) {
    if (need_dataset) {
        if (src.data_path.empty())
            throw ConfigError("--data is required: the dataset is the reference distribution");
    } else if (src.data_path.empty() == src.net_path.empty()) {
        throw ConfigError("exactly one of --data and --net must be given");
    }

    LoadedSource out;
    if (!src.data_path.empty()) {
        out.dataset = std::make_shared<EmpiricalDataset>();
        out.dataset->points = io::read_matrix_csv(src.data_path);
    }
    std::shared_ptr<const ScoreField> base;
    if (!src.net_path.empty())
        base = std::make_shared<MlpScoreNet>(MlpScoreNet::load(src.net_path));
    else
        base = std::make_shared<EmpiricalScoreField>(*out.dataset);
    if (src.perturb_eps != 0.0) {
        PerturbationSpec spec;
        spec.epsilon = src.perturb_eps;
        spec.mode = perturb_mode_from_string(src.perturb_mode);
        spec.seed = src.perturb_seed;
        base = perturbed_score(base, spec);
    }
    out.field = base;
    return out;
}

// Input paths go into reproduce_args absolutized so a replay does not depend
// on the working directory.
std::string absolute_path(const std::string& path) {
    return fs::absolute(path).string();
}

void append_source_args(std::vector<std::string>& args, const SourceOpts& src) {
    if (!src.data_path.empty()) {
        args.push_back("--data");
        args.push_back(absolute_path(src.data_path));
    }
    if (!src.net_path.empty()) {
        args.push_back("--net");
        args.push_back(absolute_path(src.net_path));
    }
    if (src.perturb_eps != 0.0) {
        args.push_back("--perturb-eps");
        args.push_back(io::format_double(src.perturb_eps));
        args.push_back("--perturb-mode");
        args.push_back(src.perturb_mode);
        args.push_back("--perturb-seed");
        args.push_back(std::to_string(src.perturb_seed));
    }
}

json source_json(const SourceOpts& src) {
    json j;
    j["data"] = src.data_path;
    j["net"] = src.net_path;
    j["perturb_eps"] = src.perturb_eps;
    j["perturb_mode"] = src.perturb_mode;
    j["perturb_seed"] = src.perturb_seed;
    return j;
}

// Sidecar that makes an output replayable: reproduce_args plus --out must
// regenerate the data file byte for byte, so --out itself is never echoed.
void write_sidecar(const fs::path& data_path, json meta,
                   const std::vector<std::string>& reproduce_args) {
    meta["reproduce_args"] = reproduce_args;
    io::write_metadata(data_path.string(), meta);
}

} // namespace

int cmd_dataset(const DatasetOpts& opt) {
    WallTimer timer;
    fs::path out = require_out_dir(opt.common.out_dir);

    SyntheticSpec spec;
    spec.base_dim = opt.base_dim;
    spec.ambient_dim = opt.ambient_dim;
    spec.n_points = opt.n_points;
    spec.weight_pos = opt.weight_pos;
    spec.offset = opt.offset;
    spec.component_std = opt.component_std;
    spec.seed = opt.common.seed;
    EmpiricalDataset ds = build_synthetic_dataset(spec);

    fs::path csv = out / "dataset.csv";
    io::write_matrix_csv(csv.string(), ds.points);

    std::vector<std::string> args = {"dataset",
                                     "--seed",
                                     std::to_string(opt.common.seed),
                                     "--n-points",
                                     std::to_string(opt.n_points),
                                     "--base-dim",
                                     std::to_string(opt.base_dim),
                                     "--ambient-dim",
                                     std::to_string(opt.ambient_dim),
                                     "--weight-pos",
                                     io::format_double(opt.weight_pos),
                                     "--offset",
                                     io::format_double(opt.offset),
                                     "--component-std",
                                     io::format_double(opt.component_std)};
    json meta;
    meta["command"] = "dataset";
    meta["seed"] = opt.common.seed;
    meta["options"] = {{"n_points", opt.n_points},       {"base_dim", opt.base_dim},
                       {"ambient_dim", opt.ambient_dim}, {"weight_pos", opt.weight_pos},
                       {"offset", opt.offset},           {"component_std", opt.component_std}};
    if (opt.common.timings) meta["wall_ms"] = timer.ms();
    write_sidecar(csv, meta, args);

    std::cout << "wrote " << csv.string() << " (" << ds.size() << " x " << ds.dim() << ")\n";
    return 0;
}

int cmd_train(const TrainOpts& opt) {
    WallTimer timer;
    fs::path out = require_out_dir(opt.common.out_dir);
    if (opt.data_path.empty()) throw ConfigError("--data is required");

    EmpiricalDataset ds;
    ds.points = io::read_matrix_csv(opt.data_path);

    TrainHyperparams hp;
    hp.iterations = opt.iterations;
    hp.batch = opt.batch;
    hp.lr = opt.lr;
    hp.clip_norm = opt.clip_norm;
    hp.t_lo = opt.t_lo;
    hp.t_hi = opt.t_hi;
    hp.hidden = opt.hidden;
    hp.log_interval = opt.log_interval;
    hp.seed = opt.common.seed;

    TrainLog log;
    MlpScoreNet net = train_mlp_score(ds, hp, &log);

    fs::path net_path = out / "net.bin";
    net.save(net_path.string());

    fs::path loss_path = out / "loss.csv";
    io::Csv loss;
    loss.header = {"iteration", "loss"};
    for (size_t i = 0; i < log.iteration.size(); ++i)
        loss.rows.push_back(
            {std::to_string(log.iteration[i]), io::format_double(log.loss[i])});
    io::write_csv(loss_path.string(), loss);

    std::vector<std::string> args = {"train",
                                     "--data",
                                     absolute_path(opt.data_path),
                                     "--seed",
                                     std::to_string(opt.common.seed),
                                     "--iterations",
                                     std::to_string(opt.iterations),
                                     "--batch",
                                     std::to_string(opt.batch),
                                     "--lr",
                                     io::format_double(opt.lr),
                                     "--clip-norm",
                                     io::format_double(opt.clip_norm),
                                     "--hidden",
                                     std::to_string(opt.hidden),
                                     "--t-lo",
                                     io::format_double(opt.t_lo),
                                     "--t-hi",
                                     io::format_double(opt.t_hi),
                                     "--log-interval",
                                     std::to_string(opt.log_interval)};
    json meta;
    meta["command"] = "train";
    meta["seed"] = opt.common.seed;
    meta["options"] = {{"data", opt.data_path}, {"iterations", opt.iterations},
                       {"batch", opt.batch},    {"lr", opt.lr},
                       {"clip_norm", opt.clip_norm}, {"hidden", opt.hidden},
                       {"t_lo", opt.t_lo},      {"t_hi", opt.t_hi},
                       {"log_interval", opt.log_interval}};
    if (!log.loss.empty()) meta["final_loss"] = log.loss.back();
    if (opt.common.timings) meta["wall_ms"] = timer.ms();
    write_sidecar(net_path, meta, args);
    write_sidecar(loss_path, meta, args);

    std::cout << "wrote " << net_path.string() << " and " << loss_path.string() << " ("
              << log.iteration.size() << " log rows)\n";
    return 0;
}

namespace {

SamplerSpec build_full_spec(const SampleOpts& opt, const Overrides& ov) {
    SamplerSpec spec;
    spec.kind = sampler_kind_from_string(opt.sampler);
    spec.solver_main = solver_from_string(opt.solver);
    spec.solver_restart = solver_from_string(opt.restart_solver);
    spec.n_steps = opt.steps;
    spec.t_min = ov.t_min;
    spec.t_max = ov.t_max;
    spec.rho = ov.rho;
    spec.final_zero = true;
    spec.noise_mult = opt.noise_mult;
    if (spec.kind == SamplerKind::improved_sde) {
        spec.churn.s_churn = opt.s_churn;
        spec.churn.s_noise = opt.s_noise;
    }
    if (spec.kind == SamplerKind::restart) {
        RestartConfig config;
        config.n_main = opt.steps;
        config.main_t_min = ov.t_min;
        config.main_t_max = ov.t_max;
        config.rho = ov.rho;
        config.final_zero = true;
        RestartLevel level;
        level.n_restart_steps = opt.restart_steps;
        level.k_iterations = opt.k;
        level.t_min = opt.restart_tmin;
        level.t_max = opt.restart_tmax;
        level.s_noise = opt.s_noise;
        config.levels.push_back(level);
        spec.restart = embed_restart_intervals(main_time_grid(config), config);
    }
    validate_sampler_spec(spec);
    return spec;
}

void append_sample_shape_args(std::vector<std::string>& args, const SampleOpts& opt,
                              SamplerKind kind) {
    args.push_back("--steps");
    args.push_back(std::to_string(opt.steps));
    switch (kind) {
        case SamplerKind::ode:
            args.insert(args.end(), {"--solver", opt.solver});
            break;
        case SamplerKind::sde:
            args.insert(args.end(), {"--noise-mult", io::format_double(opt.noise_mult)});
            break;
        case SamplerKind::improved_sde:
            args.insert(args.end(), {"--s-churn", io::format_double(opt.s_churn),
                                     "--s-noise", io::format_double(opt.s_noise)});
            break;
        case SamplerKind::restart:
            args.insert(args.end(),
                        {"--solver", opt.solver, "--restart-solver", opt.restart_solver,
                         "--restart-steps", std::to_string(opt.restart_steps), "--k",
                         std::to_string(opt.k), "--restart-tmin",
                         io::format_double(opt.restart_tmin), "--restart-tmax",
                         io::format_double(opt.restart_tmax), "--s-noise",
                         io::format_double(opt.s_noise)});
            break;
    }
}

} // namespace

int cmd_sample(const SampleOpts& opt) {
    WallTimer timer;
    fs::path out = require_out_dir(opt.common.out_dir);
    Overrides ov = parse_overrides(opt.common.unsafe_overrides);
    LoadedSource src = load_source(opt.source, false);
    SamplerSpec spec = build_full_spec(opt, ov);
    if (opt.n < 1) throw ConfigError("--n must be positive");

    int d = src.field->dim();
    Eigen::MatrixXd x0(opt.n, d);
    for (int i = 0; i < opt.n; ++i) {
        RngStream rng(opt.common.seed, static_cast<std::uint64_t>(i), kStagePrior);
        x0.row(i) = (ov.t_max * rng.normal_vec(d)).transpose();
    }
    SampleBatch batch = run_sampler(*src.field, x0, spec, opt.common.seed);

    fs::path csv = out / "samples.csv";
    io::write_matrix_csv(csv.string(), batch.points);

    std::vector<std::string> args = {"sample"};
    append_source_args(args, opt.source);
    args.insert(args.end(), {"--sampler", opt.sampler, "--n", std::to_string(opt.n),
                             "--seed", std::to_string(opt.common.seed)});
    append_sample_shape_args(args, opt, spec.kind);
    append_overrides(args, ov);

    json meta;
    meta["command"] = "sample";
    meta["seed"] = opt.common.seed;
    meta["nfe"] = batch.nfe;
    meta["n"] = opt.n;
    meta["dim"] = d;
    meta["sampler"] = describe(spec);
    meta["failed_rows"] = batch.failed.size();
    meta["source"] = source_json(opt.source);
    meta["overrides"] = ov.applied;
    if (opt.common.timings) meta["wall_ms"] = timer.ms();
    write_sidecar(csv, meta, args);

    std::cout << "wrote " << csv.string() << " (" << opt.n << " x " << d << ", nfe "
              << batch.nfe << ")\n";
    return 0;
}

namespace {

SamplerSpec build_window_spec(const DecomposeOpts& opt, const Window& w) {
    switch (sampler_kind_from_string(opt.sampler)) {
        case SamplerKind::ode:
            return window_ode_spec(opt.steps, w, solver_from_string(opt.solver));
        case SamplerKind::sde:
            return window_sde_spec(opt.steps, opt.noise_mult, w);
        case SamplerKind::improved_sde: {
            ChurnParams churn;
            churn.s_churn = opt.s_churn;
            churn.s_noise = opt.s_noise;
            return window_improved_sde_spec(opt.steps, churn, w);
        }
        case SamplerKind::restart:
            return window_restart_spec(opt.down_steps, opt.restart_steps, opt.k, w,
                                       solver_from_string(opt.solver), opt.s_noise);
    }
    throw ConfigError("unknown sampler kind");
}

// Same naming scheme the sweep grids use.
std::string window_cell_label(const DecomposeOpts& opt, SamplerKind kind) {
    std::ostringstream label;
    switch (kind) {
        case SamplerKind::ode:
            label << "ode_" << opt.steps;
            break;
        case SamplerKind::sde:
            label << "sde_" << opt.steps << "_" << opt.noise_mult;
            break;
        case SamplerKind::improved_sde:
            label << "improved_sde_" << opt.steps << "_" << opt.s_churn;
            break;
        case SamplerKind::restart:
            label << "restart_" << opt.restart_steps << "_" << opt.k;
            break;
    }
    return label.str();
}

void append_window_shape_args(std::vector<std::string>& args, const DecomposeOpts& opt,
                              SamplerKind kind) {
    switch (kind) {
        case SamplerKind::ode:
            args.insert(args.end(), {"--steps", std::to_string(opt.steps), "--solver",
                                     opt.solver});
            break;
        case SamplerKind::sde:
            args.insert(args.end(), {"--steps", std::to_string(opt.steps), "--noise-mult",
                                     io::format_double(opt.noise_mult)});
            break;
        case SamplerKind::improved_sde:
            args.insert(args.end(), {"--steps", std::to_string(opt.steps), "--s-churn",
                                     io::format_double(opt.s_churn), "--s-noise",
                                     io::format_double(opt.s_noise)});
            break;
        case SamplerKind::restart:
            args.insert(args.end(),
                        {"--down-steps", std::to_string(opt.down_steps), "--restart-steps",
                         std::to_string(opt.restart_steps), "--k", std::to_string(opt.k),
                         "--solver", opt.solver, "--s-noise", io::format_double(opt.s_noise)});
            break;
    }
}

json window_json(const Window& w) { return {{"t_min", w.t_min}, {"t_max", w.t_max}}; }

json pipeline_json(const PipelineSettings& pipe) {
    return {{"t_start", pipe.t_start},         {"t_end", pipe.t_end},
            {"steps_before", pipe.steps_before}, {"steps_after", pipe.steps_after},
            {"n_samples", pipe.n_samples},     {"rho", pipe.rho}};
}

} // namespace

int cmd_decompose(const DecomposeOpts& opt) {
    WallTimer timer;
    fs::path out = require_out_dir(opt.common.out_dir);
    Overrides ov = parse_overrides(opt.common.unsafe_overrides);
    LoadedSource src = load_source(opt.source, true);
    Window w = parse_window(opt.window);
    SamplerSpec spec = build_window_spec(opt, w);

    PipelineSettings pipe;
    pipe.t_start = ov.prior_t;
    pipe.steps_before = opt.steps_before;
    pipe.steps_after = opt.steps_after;
    pipe.rho = ov.rho;
    pipe.n_samples = opt.n_samples;

    ErrorDecomposition dec =
        decompose_errors(*src.dataset, *src.field, spec, w, pipe, opt.common.seed);

    SweepRecord rec;
    rec.cell.spec = spec;
    rec.cell.label = window_cell_label(opt, spec.kind);
    rec.nfe = dec.window_nfe;
    rec.total_w1 = dec.total_w1;
    rec.contracted_w1 = dec.contracted_w1;
    rec.additional_w1 = dec.additional_w1;
    rec.n_seed_reps = 1;
    rec.seed_group = opt.common.seed;
    rec.n_samples = dec.n_samples;

    fs::path csv = out / "decompose.csv";
    io::write_csv(csv.string(), io::sweep_records_csv({rec}, false));

    std::vector<std::string> args = {"decompose"};
    append_source_args(args, opt.source);
    args.insert(args.end(), {"--sampler", opt.sampler});
    append_window_shape_args(args, opt, spec.kind);
    args.insert(args.end(),
                {"--window", window_text(w), "--steps-before", std::to_string(opt.steps_before),
                 "--steps-after", std::to_string(opt.steps_after), "--n-samples",
                 std::to_string(opt.n_samples), "--seed", std::to_string(opt.common.seed)});
    append_overrides(args, ov);

    json meta;
    meta["command"] = "decompose";
    meta["seed"] = opt.common.seed;
    meta["window"] = window_json(w);
    meta["pipeline"] = pipeline_json(pipe);
    meta["sampler"] = describe(spec);
    meta["total_w1"] = dec.total_w1;
    meta["contracted_w1"] = dec.contracted_w1;
    meta["additional_w1"] = dec.additional_w1;
    meta["window_nfe"] = dec.window_nfe;
    meta["n_samples"] = dec.n_samples;
    meta["source"] = source_json(opt.source);
    meta["overrides"] = ov.applied;
    if (opt.common.timings) meta["wall_ms"] = timer.ms();
    write_sidecar(csv, meta, args);

    std::cout << "wrote " << csv.string() << " (total " << dec.total_w1 << ", contracted "
              << dec.contracted_w1 << ", additional " << dec.additional_w1 << ", window nfe "
              << dec.window_nfe << ")\n";
    return 0;
}

namespace {

std::vector<SweepCell> cells_for_grid(const std::string& grid, const Window& w) {
    if (grid == "ode") return ode_sweep_cells(w);
    if (grid == "sde") return sde_sweep_cells(w);
    if (grid == "restart") return restart_sweep_cells(w);
    if (grid == "improved") return improved_sde_sweep_cells(w);
    if (grid == "smoke") return smoke_sweep_cells(w);
    if (grid == "tiny") {
        // One small cell per sampler kind, for plumbing checks.
        std::vector<SweepCell> cells(3);
        cells[0].spec = window_ode_spec(6, w);
        cells[0].label = "ode_6";
        cells[1].spec = window_sde_spec(6, 1.0, w);
        cells[1].label = "sde_6_1";
        cells[2].spec = window_restart_spec(6, 2, 2, w);
        cells[2].label = "restart_2_2";
        return cells;
    }
    if (grid == "all") {
        std::vector<SweepCell> cells = ode_sweep_cells(w);
        for (const auto& source :
             {sde_sweep_cells(w), restart_sweep_cells(w), improved_sde_sweep_cells(w)})
            cells.insert(cells.end(), source.begin(), source.end());
        return cells;
    }
    throw ConfigError("unknown grid '" + grid +
                      "' (known: tiny, smoke, ode, sde, restart, improved, all)");
}

} // namespace

int cmd_sweep(const SweepOpts& opt) {
    WallTimer timer;
    fs::path out = require_out_dir(opt.common.out_dir);
    Overrides ov = parse_overrides(opt.common.unsafe_overrides);
    LoadedSource src = load_source(opt.source, true);
    Window w = parse_window(opt.window);
    std::vector<SweepCell> cells = cells_for_grid(opt.grid, w);

    SweepSettings settings;
    settings.window = w;
    settings.pipe.t_start = ov.prior_t;
    settings.pipe.steps_before = opt.steps_before;
    settings.pipe.steps_after = opt.steps_after;
    settings.pipe.rho = ov.rho;
    settings.pipe.n_samples = opt.n_samples;
    settings.n_seed_reps = opt.reps;
    settings.base_seed = opt.common.seed;
    settings.threads = opt.common.threads;

    std::vector<SweepRecord> records = run_sweep(*src.dataset, *src.field, cells, settings);

    fs::path csv = out / "sweep.csv";
    io::write_csv(csv.string(), io::sweep_records_csv(records, false));

    std::vector<std::string> args = {"sweep"};
    append_source_args(args, opt.source);
    args.insert(args.end(),
                {"--grid", opt.grid, "--window", window_text(w), "--steps-before",
                 std::to_string(opt.steps_before), "--steps-after",
                 std::to_string(opt.steps_after), "--n-samples", std::to_string(opt.n_samples),
                 "--reps", std::to_string(opt.reps), "--seed",
                 std::to_string(opt.common.seed)});
    append_overrides(args, ov);

    int n_failed = 0;
    for (const auto& rec : records)
        if (!rec.ok()) ++n_failed;

    json meta;
    meta["command"] = "sweep";
    meta["seed"] = opt.common.seed;
    meta["grid"] = opt.grid;
    meta["window"] = window_json(w);
    meta["pipeline"] = pipeline_json(settings.pipe);
    meta["reps"] = opt.reps;
    meta["threads"] = opt.common.threads;
    meta["n_cells"] = records.size();
    meta["n_failed_cells"] = n_failed;
    meta["source"] = source_json(opt.source);
    meta["overrides"] = ov.applied;
    if (opt.common.timings) {
        json walls = json::array();
        for (const auto& rec : records) walls.push_back(rec.wall_ms);
        meta["cell_wall_ms"] = walls;
        meta["wall_ms"] = timer.ms();
    }
    write_sidecar(csv, meta, args);

    fs::path failures = out / "sweep.failures.log";
    if (n_failed > 0) {
        std::ofstream log(failures, std::ios::binary);
        for (const auto& rec : records)
            if (!rec.ok()) log << rec.cell.label << ": " << rec.error << "\n";
        log.close();
        write_sidecar(failures, meta, args);
    }

    std::cout << "wrote " << csv.string() << " (" << records.size() - n_failed << "/"
              << records.size() << " cells ok)\n";
    if (n_failed == static_cast<int>(records.size())) {
        std::cerr << "error: every sweep cell failed, see " << failures.string() << "\n";
        return 1;
    }
    return 0;
}

int cmd_pareto(const ParetoOpts& opt) {
    WallTimer timer;
    fs::path out = require_out_dir(opt.common.out_dir);
    if (opt.in_path.empty()) throw ConfigError("--in is required");

    io::Csv in = io::read_csv(opt.in_path);
    int xc = in.column(opt.x_key);
    int yc = in.column(opt.y_key);
    if (xc < 0) throw ConfigError("input has no column '" + opt.x_key + "'");
    if (yc < 0) throw ConfigError("input has no column '" + opt.y_key + "'");

    std::vector<double> xs, ys;
    xs.reserve(in.rows.size());
    ys.reserve(in.rows.size());
    for (const auto& row : in.rows) {
        xs.push_back(parse_number(row[xc], opt.x_key));
        ys.push_back(parse_number(row[yc], opt.y_key));
    }
    std::vector<int> frontier = pareto_frontier(xs, ys);
    std::vector<int> rank(in.rows.size(), -1);
    for (size_t i = 0; i < frontier.size(); ++i) rank[frontier[i]] = static_cast<int>(i);

    io::Csv result;
    result.header = in.header;
    result.header.push_back("frontier_rank");
    result.rows = in.rows;
    for (size_t i = 0; i < result.rows.size(); ++i)
        result.rows[i].push_back(std::to_string(rank[i]));

    fs::path csv = out / "pareto.csv";
    io::write_csv(csv.string(), result);
    fs::path svg = out / "pareto.svg";
    io::write_pareto_svg(svg.string(), xs, ys, frontier, opt.x_key, opt.y_key);

    std::vector<std::string> args = {"pareto",   "--in",    absolute_path(opt.in_path),
                                     "--x-key",  opt.x_key, "--y-key",
                                     opt.y_key};
    json meta;
    meta["command"] = "pareto";
    meta["in"] = opt.in_path;
    meta["x_key"] = opt.x_key;
    meta["y_key"] = opt.y_key;
    meta["n_records"] = in.rows.size();
    meta["frontier"] = frontier;
    if (opt.common.timings) meta["wall_ms"] = timer.ms();
    write_sidecar(csv, meta, args);
    write_sidecar(svg, meta, args);

    std::cout << "wrote " << csv.string() << " and " << svg.string() << " ("
              << frontier.size() << " of " << in.rows.size() << " records on the frontier)\n";
    return 0;
}

} // namespace restart::cli
