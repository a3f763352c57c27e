#include "restart/score_field.hpp"

#include <cmath>
#include <numbers>

#include "restart/errors.hpp"
#include "restart/rng.hpp"

namespace restart {

namespace {

void require_time(double t) {
    if (!(t > 0.0)) throw DomainError("score fields require t > 0");
}

void require_dim(int expected, const Eigen::VectorXd& x) {
    if (x.size() != expected) throw ConfigError("score field input dimension mismatch");
}

} // namespace

void ScoreField::eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const {
    out.resize(xs.rows(), xs.cols());
    for (Eigen::Index i = 0; i < xs.rows(); ++i)
        out.row(i) = eval(xs.row(i).transpose(), t).transpose();
}

GaussianMixture::GaussianMixture(Eigen::MatrixXd means, Eigen::VectorXd weights,
                                 Eigen::VectorXd stds)
    : means_(std::move(means)), weights_(std::move(weights)), stds_(std::move(stds)) {
    int k = static_cast<int>(means_.rows());
    if (k < 1) throw ConfigError("mixture needs at least one component");
    if (weights_.size() != k || stds_.size() != k)
        throw ConfigError("mixture weights/stds size must match component count");
    if ((weights_.array() <= 0.0).any()) throw ConfigError("mixture weights must be positive");
    if (std::abs(weights_.sum() - 1.0) > 1e-12)
        throw ConfigError("mixture weights must sum to 1 within 1e-12");
    if ((stds_.array() <= 0.0).any()) throw ConfigError("mixture stds must be positive");
}

// Responsibilities r_k = softmax_k(log w_k - d/2 log(2 pi v_k) - ||x-mu_k||^2 / (2 v_k))
// with v_k = s_k^2 + t^2; the score is sum_k r_k (mu_k - x) / v_k.
Eigen::VectorXd GaussianMixture::eval(const Eigen::VectorXd& x, double t) const {
    require_time(t);
    require_dim(dim(), x);
    int k = n_components();
    double d = static_cast<double>(dim());
    Eigen::VectorXd logits(k), inv_var(k);
    for (int j = 0; j < k; ++j) {
        double v = stds_[j] * stds_[j] + t * t;
        inv_var[j] = 1.0 / v;
        double sq = (x - means_.row(j).transpose()).squaredNorm();
        logits[j] = std::log(weights_[j]) - 0.5 * d * std::log(2.0 * std::numbers::pi * v)
                  - 0.5 * sq * inv_var[j];
    }
    double shift = logits.maxCoeff();
    Eigen::VectorXd r = (logits.array() - shift).exp();
    r /= r.sum();
    Eigen::VectorXd score = Eigen::VectorXd::Zero(dim());
    for (int j = 0; j < k; ++j)
        score += r[j] * inv_var[j] * (means_.row(j).transpose() - x);
    return score;
}

void GaussianMixture::eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const {
    require_time(t);
    if (xs.cols() != dim()) throw ConfigError("score field input dimension mismatch");
    int k = n_components();
    double d = static_cast<double>(dim());
    Eigen::VectorXd var = stds_.array().square() + t * t;
    Eigen::VectorXd log_norm(k);
    for (int j = 0; j < k; ++j)
        log_norm[j] = std::log(weights_[j]) - 0.5 * d * std::log(2.0 * std::numbers::pi * var[j]);

    // logits(i, j) = log_norm_j - ||x_i - mu_j||^2 / (2 v_j)
    Eigen::MatrixXd sq = (-2.0 * xs * means_.transpose()).colwise() + xs.rowwise().squaredNorm();
    sq.rowwise() += means_.rowwise().squaredNorm().transpose();
    Eigen::MatrixXd logits = (-0.5 * sq) * var.cwiseInverse().asDiagonal();
    logits.rowwise() += log_norm.transpose();

    Eigen::VectorXd shift = logits.rowwise().maxCoeff();
    Eigen::MatrixXd resp = (logits.colwise() - shift).array().exp();
    Eigen::VectorXd inv_sum = resp.rowwise().sum().cwiseInverse();  // evaluate before scaling
    resp.array().colwise() *= inv_sum.array();

    // score_i = sum_j (r_ij / v_j) mu_j - (sum_j r_ij / v_j) x_i
    Eigen::MatrixXd scaled = resp * var.cwiseInverse().asDiagonal();
    out = scaled * means_ - scaled.rowwise().sum().asDiagonal() * xs;
}

double GaussianMixture::log_density(const Eigen::VectorXd& x, double t) const {
    require_time(t);
    require_dim(dim(), x);
    int k = n_components();
    double d = static_cast<double>(dim());
    Eigen::VectorXd logits(k);
    for (int j = 0; j < k; ++j) {
        double v = stds_[j] * stds_[j] + t * t;
        double sq = (x - means_.row(j).transpose()).squaredNorm();
        logits[j] = std::log(weights_[j]) - 0.5 * d * std::log(2.0 * std::numbers::pi * v)
                  - 0.5 * sq / v;
    }
    double shift = logits.maxCoeff();
    return shift + std::log((logits.array() - shift).exp().sum());
}

EmpiricalScoreField::EmpiricalScoreField(const EmpiricalDataset& ds)
    : points_(ds.points), sq_norms_(ds.points.rowwise().squaredNorm()) {
    if (points_.rows() < 1) throw ConfigError("empirical score needs a nonempty dataset");
}

Eigen::VectorXd EmpiricalScoreField::eval(const Eigen::VectorXd& x, double t) const {
    require_time(t);
    require_dim(dim(), x);
    int n = static_cast<int>(points_.rows());
    double inv_var = 1.0 / (t * t);
    Eigen::VectorXd logits(n);
    for (int i = 0; i < n; ++i)
        logits[i] = -0.5 * (x - points_.row(i).transpose()).squaredNorm() * inv_var;
    double shift = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - shift).exp();
    w /= w.sum();
    return (points_.transpose() * w - x) * inv_var;
}

void EmpiricalScoreField::eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const {
    require_time(t);
    if (xs.cols() != dim()) throw ConfigError("score field input dimension mismatch");
    double inv_var = 1.0 / (t * t);
    Eigen::MatrixXd logits = (-2.0 * xs * points_.transpose()).colwise() + xs.rowwise().squaredNorm();
    logits.rowwise() += sq_norms_.transpose();
    logits *= -0.5 * inv_var;
    Eigen::VectorXd shift = logits.rowwise().maxCoeff();
    Eigen::MatrixXd w = (logits.colwise() - shift).array().exp();
    Eigen::VectorXd inv_sum = w.rowwise().sum().cwiseInverse();  // evaluate before scaling
    w.array().colwise() *= inv_sum.array();
    out = (w * points_ - xs) * inv_var;
}

double EmpiricalScoreField::log_density(const Eigen::VectorXd& x, double t) const {
    require_time(t);
    require_dim(dim(), x);
    int n = static_cast<int>(points_.rows());
    double d = static_cast<double>(dim());
    double log_norm = -std::log(static_cast<double>(n))
                    - 0.5 * d * std::log(2.0 * std::numbers::pi * t * t);
    Eigen::VectorXd logits(n);
    for (int i = 0; i < n; ++i)
        logits[i] = -0.5 * (x - points_.row(i).transpose()).squaredNorm() / (t * t);
    double shift = logits.maxCoeff();
    return log_norm + shift + std::log((logits.array() - shift).exp().sum());
}

Eigen::VectorXd mixture_score(const GaussianMixture& gm, const Eigen::VectorXd& x, double t) {
    return gm.eval(x, t);
}

Eigen::VectorXd empirical_score(const EmpiricalDataset& ds, const Eigen::VectorXd& x, double t) {
    return EmpiricalScoreField(ds).eval(x, t);
}

namespace {

class GuidedScoreField final : public ScoreField {
public:
    GuidedScoreField(std::shared_ptr<const ScoreField> cond,
                     std::shared_ptr<const ScoreField> uncond, double w)
        : cond_(std::move(cond)), uncond_(std::move(uncond)), w_(w) {
        if (!cond_ || !uncond_) throw ConfigError("guided score needs both fields");
        if (cond_->dim() != uncond_->dim())
            throw ConfigError("guided score fields must share a dimension");
    }

    int dim() const override { return cond_->dim(); }

    Eigen::VectorXd eval(const Eigen::VectorXd& x, double t) const override {
        return w_ * cond_->eval(x, t) + (1.0 - w_) * uncond_->eval(x, t);
    }

    void eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const override {
        Eigen::MatrixXd a, b;
        cond_->eval_batch(xs, t, a);
        uncond_->eval_batch(xs, t, b);
        out = w_ * a + (1.0 - w_) * b;
    }

private:
    std::shared_ptr<const ScoreField> cond_, uncond_;
    double w_;
};

class PerturbedScoreField final : public ScoreField {
public:
    PerturbedScoreField(std::shared_ptr<const ScoreField> base, const PerturbationSpec& spec)
        : base_(std::move(base)), spec_(spec) {
        if (!base_) throw ConfigError("perturbed score needs a base field");
        if (!(spec_.epsilon >= 0.0)) throw ConfigError("perturbation epsilon must be >= 0");
        int d = base_->dim();
        RngStream rng(spec_.seed, 0, kStageProbe);
        if (spec_.mode == PerturbMode::fixed_direction) {
            direction_ = rng.normal_vec(d);
            double norm = direction_.norm();
            if (norm == 0.0) direction_.setConstant(1.0 / std::sqrt(double(d)));
            else direction_ /= norm;
        } else {
            // Low-frequency field g_j(x) = sin(a_j . x + b_j); ||g|| <= sqrt(d)
            // keeps the scaled perturbation within epsilon.
            freq_.resize(d, d);
            phase_.resize(d);
            for (int j = 0; j < d; ++j) {
                freq_.row(j) = (0.3 * rng.normal_vec(d)).transpose();
                phase_[j] = 2.0 * std::numbers::pi * rng.uniform();
            }
        }
    }

    int dim() const override { return base_->dim(); }

    Eigen::VectorXd eval(const Eigen::VectorXd& x, double t) const override {
        if (!(t > 0.0)) throw DomainError("perturbed score requires t > 0");
        return base_->eval(x, t) + (spec_.epsilon / t) * direction_at(x);
    }

    void eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const override {
        if (!(t > 0.0)) throw DomainError("perturbed score requires t > 0");
        base_->eval_batch(xs, t, out);
        double scale = spec_.epsilon / t;
        if (spec_.mode == PerturbMode::fixed_direction) {
            out.rowwise() += scale * direction_.transpose();
        } else {
            double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim()));
            Eigen::MatrixXd g = (xs * freq_.transpose()).rowwise() + phase_.transpose();
            out += scale * inv_sqrt_d * g.array().sin().matrix();
        }
    }

private:
    Eigen::VectorXd direction_at(const Eigen::VectorXd& x) const {
        if (spec_.mode == PerturbMode::fixed_direction) return direction_;
        Eigen::VectorXd g = ((freq_ * x + phase_).array().sin());
        return g / std::sqrt(static_cast<double>(dim()));
    }

    std::shared_ptr<const ScoreField> base_;
    PerturbationSpec spec_;
    Eigen::VectorXd direction_;
    Eigen::MatrixXd freq_;
    Eigen::VectorXd phase_;
};

} // namespace

std::shared_ptr<ScoreField> guided_score(std::shared_ptr<const ScoreField> cond,
                                         std::shared_ptr<const ScoreField> uncond,
                                         double guidance_weight) {
    return std::make_shared<GuidedScoreField>(std::move(cond), std::move(uncond), guidance_weight);
}

std::shared_ptr<ScoreField> perturbed_score(std::shared_ptr<const ScoreField> base,
                                            const PerturbationSpec& spec) {
    return std::make_shared<PerturbedScoreField>(std::move(base), spec);
}

} // namespace restart
