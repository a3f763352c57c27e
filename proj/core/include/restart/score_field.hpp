#pragma once

#include <cstdint>
#include <memory>

#include <Eigen/Core>

namespace restart {

// Score of the noised density p_t = p_0 * N(0, t^2 I) under the sigma(t) = t
// convention.  eval is const and safe to call concurrently.
class ScoreField {
public:
    virtual ~ScoreField() = default;

    virtual int dim() const = 0;

    virtual Eigen::VectorXd eval(const Eigen::VectorXd& x, double t) const = 0;

    // xs is one point per row; out is resized to match.  The default loops
    // over rows; dense fields override with a vectorized path.
    virtual void eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const;
};

// Isotropic Gaussian mixture sum_k w_k N(mu_k, s_k^2 I).  At time t the
// component variances widen to s_k^2 + t^2, so both the score and the log
// density stay closed-form.
class GaussianMixture final : public ScoreField {
public:
    GaussianMixture(Eigen::MatrixXd means, Eigen::VectorXd weights, Eigen::VectorXd stds);

    int dim() const override { return static_cast<int>(means_.cols()); }
    int n_components() const { return static_cast<int>(means_.rows()); }

    Eigen::VectorXd eval(const Eigen::VectorXd& x, double t) const override;
    void eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const override;

    double log_density(const Eigen::VectorXd& x, double t) const;

    const Eigen::MatrixXd& means() const { return means_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    const Eigen::VectorXd& stds() const { return stds_; }

private:
    Eigen::MatrixXd means_;    // k x d
    Eigen::VectorXd weights_;  // k, positive, sums to 1
    Eigen::VectorXd stds_;     // k, positive
};

// Point cloud treated as an equal-weight mixture of Dirac masses.
struct EmpiricalDataset {
    Eigen::MatrixXd points;  // n x d

    int dim() const { return static_cast<int>(points.cols()); }
    int size() const { return static_cast<int>(points.rows()); }
};

// Exact score of (1/n) sum_i N(x_i, t^2 I); softmax responsibilities are
// computed with the log-sum-exp shift so large ||x|| and small t stay finite.
class EmpiricalScoreField final : public ScoreField {
public:
    explicit EmpiricalScoreField(const EmpiricalDataset& ds);

    int dim() const override { return static_cast<int>(points_.cols()); }

    Eigen::VectorXd eval(const Eigen::VectorXd& x, double t) const override;
    void eval_batch(const Eigen::MatrixXd& xs, double t, Eigen::MatrixXd& out) const override;

    double log_density(const Eigen::VectorXd& x, double t) const;

private:
    Eigen::MatrixXd points_;      // n x d
    Eigen::VectorXd sq_norms_;    // cached ||x_i||^2
};

Eigen::VectorXd mixture_score(const GaussianMixture& gm, const Eigen::VectorXd& x, double t);
Eigen::VectorXd empirical_score(const EmpiricalDataset& ds, const Eigen::VectorXd& x, double t);

// Classifier-free combination w * cond + (1 - w) * uncond; w > 1 extrapolates.
std::shared_ptr<ScoreField> guided_score(std::shared_ptr<const ScoreField> cond,
                                         std::shared_ptr<const ScoreField> uncond,
                                         double guidance_weight);

enum class PerturbMode {
    fixed_direction,  // constant unit direction, saturates the bound exactly
    smooth_field,     // seeded low-frequency direction field
};

// Controlled approximation error: the returned field f satisfies
// sup ||t * (f(x,t) - base(x,t))|| <= epsilon.
struct PerturbationSpec {
    double epsilon = 0.0;
    PerturbMode mode = PerturbMode::fixed_direction;
    std::uint64_t seed = 0;
};

std::shared_ptr<ScoreField> perturbed_score(std::shared_ptr<const ScoreField> base,
                                            const PerturbationSpec& spec);

} // namespace restart
