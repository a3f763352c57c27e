#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace restart::cli {

// Flags every subcommand accepts.  threads only matters for sweep; timings
// adds measured wall times to the metadata sidecar (never to the data files,
// which stay byte-reproducible).
struct CommonOpts {
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string config_path;  // consumed during config-file expansion
    int threads = 1;
    bool timings = false;
    std::vector<std::string> unsafe_overrides;  // KEY=VALUE pairs
};

// Score-field source: a dataset CSV (exact empirical score, optionally
// perturbed) or a serialized net.  decompose and sweep always need the
// dataset as the reference distribution; --net then replaces only the field.
struct SourceOpts {
    std::string data_path;
    std::string net_path;
    double perturb_eps = 0.0;
    std::string perturb_mode = "fixed_direction";
    std::uint64_t perturb_seed = 0;
};

struct DatasetOpts {
    CommonOpts common;
    int n_points = 2000;
    int base_dim = 4;
    int ambient_dim = 20;
    double weight_pos = 0.3;
    double offset = 3.0;
    double component_std = 1.0;
};

struct TrainOpts {
    CommonOpts common;
    std::string data_path;
    long long iterations = 50000;
    int batch = 128;
    double lr = 1e-3;
    double clip_norm = 10.0;
    int hidden = 64;
    double t_lo = 0.01;
    double t_hi = 5.0;
    long long log_interval = 500;
};

// Full run from the prior down to zero.
struct SampleOpts {
    CommonOpts common;
    SourceOpts source;
    std::string sampler = "ode";
    int n = 64;
    int steps = 18;
    std::string solver = "heun";
    std::string restart_solver = "heun";
    double noise_mult = 1.0;
    double s_churn = 0.0;
    double s_noise = 1.0;
    int restart_steps = 3;
    int k = 10;
    double restart_tmin = 0.06;
    double restart_tmax = 0.30;
};

// Window-restricted error decomposition.
struct DecomposeOpts {
    CommonOpts common;
    SourceOpts source;
    std::string sampler = "ode";
    std::string window = "1.0:1.5";
    int steps = 16;
    std::string solver = "euler";
    double noise_mult = 1.0;
    double s_churn = 0.0;
    double s_noise = 1.0;
    int down_steps = 10;
    int restart_steps = 3;
    int k = 2;
    int steps_before = 64;
    int steps_after = 128;
    int n_samples = 1000;
};

struct SweepOpts {
    CommonOpts common;
    SourceOpts source;
    std::string grid = "smoke";
    std::string window = "1.0:1.5";
    int steps_before = 64;
    int steps_after = 128;
    int n_samples = 1000;
    int reps = 5;
};

struct ParetoOpts {
    CommonOpts common;
    std::string in_path;
    std::string x_key = "nfe";
    std::string y_key = "total_w1";
};

int cmd_dataset(const DatasetOpts& opt);
int cmd_train(const TrainOpts& opt);
int cmd_sample(const SampleOpts& opt);
int cmd_decompose(const DecomposeOpts& opt);
int cmd_sweep(const SweepOpts& opt);
int cmd_pareto(const ParetoOpts& opt);

} // namespace restart::cli
