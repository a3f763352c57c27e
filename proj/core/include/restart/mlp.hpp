#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "restart/score_field.hpp"

namespace restart {

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
};

// Four dense layers with tanh activations on the hidden ones.  The input is
// the point concatenated with log(t); the output approximates the score.
class MlpScoreNet final : public ScoreField {
public:
    MlpScoreNet() = default;
    MlpScoreNet(int dim, int hidden, std::uint64_t seed);

    int dim() const override { return dim_; }
    int hidden() const { return hidden_; }

    Eigen::VectorXd eval(const Eigen::VectorXd& x, double t) const override;
    void eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const override;

    // Jacobian of the network output with respect to its raw input
    // [x; log t], shape dim x (dim + 1).
    Eigen::MatrixXd input_jacobian(const Eigen::VectorXd& x, double t) const;

    // Flat little-endian binary format: magic "MLPSCR01"; u32 dim, hidden,
    // n_layers; f64 t_lo, t_hi; then per layer u32 rows, u32 cols, f64
    // weights row-major, f64 biases.
    void save(const std::string& path) const;
    static MlpScoreNet load(const std::string& path);

    std::vector<DenseLayer> layers;
    double t_lo = 0.0;  // trained time range, informational
    double t_hi = 0.0;

private:
    int dim_ = 0;
    int hidden_ = 0;
};

Eigen::VectorXd mlp_eval(const MlpScoreNet& net, const Eigen::VectorXd& x, double t);

struct TrainHyperparams {
    long long iterations = 50000;
    int batch = 128;
    double lr = 1e-3;
    double clip_norm = 10.0;
    double t_lo = 0.01;  // t drawn log-uniformly from [t_lo, t_hi]
    double t_hi = 5.0;
    int hidden = 64;
    long long log_interval = 500;
    std::uint64_t seed = 0;
};

struct TrainLog {
    std::vector<long long> iteration;
    std::vector<double> loss;
};

// Denoising score-matching batch loss, mean_i ||t_i net(x_i + t_i eps_i, t_i)
// + eps_i||^2, equal to the t^2-weighted score-matching residual.  When grads
// is non-null it receives d(loss)/d(parameters) laid out like net.layers.
double dsm_loss(const MlpScoreNet& net, const Eigen::MatrixXd& x_noisy,
                const Eigen::VectorXd& ts, const Eigen::MatrixXd& eps,
                std::vector<DenseLayer>* grads);

// Plain SGD with global gradient-norm clipping.  Throws TrainingDiverged if
// the loss stops being finite.  Zero iterations returns the seeded
// initialization untouched.
MlpScoreNet train_mlp_score(const EmpiricalDataset& ds, const TrainHyperparams& hp,
                            TrainLog* log = nullptr);

} // namespace restart
