#include "restart/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "restart/errors.hpp"
#include "restart/rng.hpp"

namespace restart {

namespace {

constexpr char kMagic[8] = {'M', 'L', 'P', 'S', 'C', 'R', '0', '1'};

// acts[0] is the raw input; acts[k+1] is layer k's output (tanh on hidden
// layers, identity on the last).
void forward(const std::vector<DenseLayer>& layers, const Eigen::MatrixXd& input,
             std::vector<Eigen::MatrixXd>& acts) {
    acts.resize(layers.size() + 1);
    acts[0] = input;
    for (size_t k = 0; k < layers.size(); ++k) {
        Eigen::MatrixXd z = acts[k] * layers[k].weight.transpose();
        z.rowwise() += layers[k].bias.transpose();
        if (k + 1 < layers.size()) acts[k + 1] = z.array().tanh();
        else acts[k + 1] = std::move(z);
    }
}

Eigen::MatrixXd with_time_feature(const Eigen::MatrixXd& xs, double t) {
    Eigen::MatrixXd input(xs.rows(), xs.cols() + 1);
    input.leftCols(xs.cols()) = xs;
    input.col(xs.cols()).setConstant(std::log(t));
    return input;
}

} // namespace

MlpScoreNet::MlpScoreNet(int dim, int hidden, std::uint64_t seed)
    : dim_(dim), hidden_(hidden) {
    if (dim < 1 || hidden < 1) throw ConfigError("mlp needs dim >= 1 and hidden >= 1");
    std::vector<std::pair<int, int>> shapes = {
        {hidden, dim + 1}, {hidden, hidden}, {hidden, hidden}, {dim, hidden}};
    layers.resize(shapes.size());
    for (size_t k = 0; k < shapes.size(); ++k) {
        auto [rows, cols] = shapes[k];
        RngStream rng(seed, k, kStageInit);
        double scale = 1.0 / std::sqrt(static_cast<double>(cols));
        layers[k].weight.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) layers[k].weight(i, j) = scale * rng.normal();
        layers[k].bias = Eigen::VectorXd::Zero(rows);
    }
}

Eigen::VectorXd MlpScoreNet::eval(const Eigen::VectorXd& x, double t) const {
    if (!(t > 0.0)) throw DomainError("mlp score requires t > 0");
    if (x.size() != dim_) throw ConfigError("mlp input dimension mismatch");
    std::vector<Eigen::MatrixXd> acts;
    forward(layers, with_time_feature(x.transpose(), t), acts);
    return acts.back().row(0).transpose();
}

void MlpScoreNet::eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const {
    if (!(t > 0.0)) throw DomainError("mlp score requires t > 0");
    if (xs.cols() != dim_) throw ConfigError("mlp input dimension mismatch");
    std::vector<Eigen::MatrixXd> acts;
    forward(layers, with_time_feature(xs, t), acts);
    out = std::move(acts.back());
}

Eigen::MatrixXd MlpScoreNet::input_jacobian(const Eigen::VectorXd& x, double t) const {
    if (!(t > 0.0)) throw DomainError("mlp score requires t > 0");
    std::vector<Eigen::MatrixXd> acts;
    forward(layers, with_time_feature(x.transpose(), t), acts);
    // Chain diag(tanh') through the hidden layers.
    Eigen::MatrixXd jac = layers[0].weight;
    for (size_t k = 0; k + 1 < layers.size(); ++k) {
        Eigen::VectorXd h = acts[k + 1].row(0).transpose();
        jac = (1.0 - h.array().square()).matrix().asDiagonal() * jac;
        jac = layers[k + 1].weight * jac;
    }
    return jac;
}

Eigen::VectorXd mlp_eval(const MlpScoreNet& net, const Eigen::VectorXd& x, double t) {
    return net.eval(x, t);
}

double dsm_loss(const MlpScoreNet& net, const Eigen::MatrixXd& x_noisy,
                const Eigen::VectorXd& ts, const Eigen::MatrixXd& eps,
                std::vector<DenseLayer>* grads) {
    const Eigen::Index n = x_noisy.rows();
    if (ts.size() != n || eps.rows() != n || eps.cols() != x_noisy.cols())
        throw ConfigError("dsm_loss batch shapes disagree");

    Eigen::MatrixXd input(n, x_noisy.cols() + 1);
    input.leftCols(x_noisy.cols()) = x_noisy;
    input.col(x_noisy.cols()) = ts.array().log();

    std::vector<Eigen::MatrixXd> acts;
    forward(net.layers, input, acts);

    // residual r_i = t_i y_i + eps_i; loss = mean_i ||r_i||^2
    Eigen::MatrixXd residual = ts.asDiagonal() * acts.back() + eps;
    double loss = residual.squaredNorm() / static_cast<double>(n);

    if (grads != nullptr) {
        grads->resize(net.layers.size());
        Eigen::MatrixXd delta =
            (2.0 / static_cast<double>(n)) * (ts.asDiagonal() * residual);
        for (int k = static_cast<int>(net.layers.size()) - 1; k >= 0; --k) {
            (*grads)[k].weight = delta.transpose() * acts[k];
            (*grads)[k].bias = delta.colwise().sum().transpose();
            if (k > 0) {
                delta = ((delta * net.layers[k].weight).array()
                         * (1.0 - acts[k].array().square())).matrix();
            }
        }
    }
    return loss;
}

MlpScoreNet train_mlp_score(const EmpiricalDataset& ds, const TrainHyperparams& hp,
                            TrainLog* log) {
    if (hp.iterations < 0) throw ConfigError("training needs iterations >= 0");
    if (hp.batch < 1) throw ConfigError("training needs batch >= 1");
    if (!(hp.lr > 0.0)) throw ConfigError("training needs lr > 0");
    if (!(hp.t_lo > 0.0) || !(hp.t_hi > hp.t_lo))
        throw ConfigError("training needs 0 < t_lo < t_hi");

    const int d = ds.dim();
    const int n_data = ds.size();
    MlpScoreNet net(d, hp.hidden, hp.seed);
    net.t_lo = hp.t_lo;
    net.t_hi = hp.t_hi;

    RngStream rng(hp.seed, 0, kStageTrain);
    const double log_lo = std::log(hp.t_lo);
    const double log_span = std::log(hp.t_hi) - log_lo;

    Eigen::MatrixXd x_noisy(hp.batch, d), eps(hp.batch, d);
    Eigen::VectorXd ts(hp.batch);
    std::vector<DenseLayer> grads;

    for (long long iter = 0; iter < hp.iterations; ++iter) {
        for (int i = 0; i < hp.batch; ++i) {
            int idx = std::min(n_data - 1, static_cast<int>(rng.uniform() * n_data));
            double t = std::exp(log_lo + log_span * rng.uniform());
            ts[i] = t;
            for (int j = 0; j < d; ++j) eps(i, j) = rng.normal();
            x_noisy.row(i) = ds.points.row(idx) + t * eps.row(i);
        }

        double loss = dsm_loss(net, x_noisy, ts, eps, &grads);
        if (!std::isfinite(loss))
            throw TrainingDiverged("training loss became non-finite", iter);
        if (log != nullptr &&
            (iter % hp.log_interval == 0 || iter + 1 == hp.iterations)) {
            log->iteration.push_back(iter);
            log->loss.push_back(loss);
        }

        double sq_norm = 0.0;
        for (const auto& g : grads) sq_norm += g.weight.squaredNorm() + g.bias.squaredNorm();
        double scale = hp.lr;
        if (hp.clip_norm > 0.0) {
            double norm = std::sqrt(sq_norm);
            if (norm > hp.clip_norm) scale *= hp.clip_norm / norm;
        }
        for (size_t k = 0; k < net.layers.size(); ++k) {
            net.layers[k].weight -= scale * grads[k].weight;
            net.layers[k].bias -= scale * grads[k].bias;
        }
    }
    return net;
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw ConfigError("mlp file truncated");
    return value;
}

} // namespace

void MlpScoreNet::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(hidden_));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(layers.size()));
    write_raw<double>(out, t_lo);
    write_raw<double>(out, t_hi);
    for (const auto& layer : layers) {
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(layer.weight.rows()));
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(layer.weight.cols()));
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
            for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
                write_raw<double>(out, layer.weight(i, j));
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            write_raw<double>(out, layer.bias[i]);
    }
    if (!out) throw ConfigError("failed writing '" + path + "'");
}

MlpScoreNet MlpScoreNet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ConfigError("'" + path + "' is not an mlp score file");

    MlpScoreNet net;
    net.dim_ = static_cast<int>(read_raw<std::uint32_t>(in));
    net.hidden_ = static_cast<int>(read_raw<std::uint32_t>(in));
    auto n_layers = read_raw<std::uint32_t>(in);
    if (net.dim_ < 1 || net.hidden_ < 1 || n_layers < 1 || n_layers > 64)
        throw ConfigError("mlp file has implausible dimensions");
    net.t_lo = read_raw<double>(in);
    net.t_hi = read_raw<double>(in);
    net.layers.resize(n_layers);
    for (auto& layer : net.layers) {
        auto rows = read_raw<std::uint32_t>(in);
        auto cols = read_raw<std::uint32_t>(in);
        if (rows < 1 || cols < 1 || rows > 1 << 20 || cols > 1 << 20)
            throw ConfigError("mlp file has implausible layer shape");
        layer.weight.resize(rows, cols);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j)
                layer.weight(i, j) = read_raw<double>(in);
        layer.bias.resize(rows);
        for (std::uint32_t i = 0; i < rows; ++i) layer.bias[i] = read_raw<double>(in);
    }
    if (net.layers.front().weight.cols() != net.dim_ + 1 ||
        net.layers.back().weight.rows() != net.dim_)
        throw ConfigError("mlp file layer shapes do not match its dimension");
    return net;
}

} // namespace restart
