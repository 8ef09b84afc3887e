#pragma once

#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace gpmd {

/// Affine input map x -> (x - offset) ./ scale applied before kernel evaluation.
struct InputTransform {
    Eigen::VectorXd offset;
    Eigen::VectorXd scale;

    static InputTransform identity(Eigen::Index dim);
    /// Zero mean, unit standard deviation per column of `samples` (constant columns keep scale 1).
    static InputTransform standardize(const Eigen::MatrixXd& samples);
    Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Covariance function over joint (action, context) input vectors.
class Kernel {
public:
    enum class Kind { SquaredExponential, Linear, Sum, Product };

    /// outputscale * exp(-0.5 * sum_i ((x_i - y_i) / l_i)^2). A single lengthscale is broadcast.
    static Kernel squared_exponential(Eigen::VectorXd lengthscales, double outputscale);
    /// outputscale * <x, y>.
    static Kernel linear(double outputscale);
    static Kernel sum(Kernel a, Kernel b);
    static Kernel product(Kernel a, Kernel b);

    /// Returns a copy evaluating on transform.apply(x).
    Kernel with_transform(InputTransform transform) const;

    double operator()(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) const;

    /// Gram matrix between the rows of a and the rows of b.
    Eigen::MatrixXd cross(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const;
    /// k(x, x) for every row.
    Eigen::VectorXd diag(const Eigen::MatrixXd& a) const;

    Kind kind() const { return kind_; }

    nlohmann::json to_json() const;
    static Kernel from_json(const nlohmann::json& j);

private:
    double eval_raw(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) const;

    Kind kind_ = Kind::SquaredExponential;
    Eigen::VectorXd lengthscales_;
    double outputscale_ = 1.0;
    std::shared_ptr<const Kernel> left_;
    std::shared_ptr<const Kernel> right_;
    std::shared_ptr<const InputTransform> transform_;
};

struct GpHyper {
    /// Regularization lambda of K + lambda I.
    double lambda = 1.0;
    /// Observation noise standard deviation sigma.
    double noise_sigma = 1.0;
    /// RKHS norm bound B.
    double rkhs_bound = 1.0;
    /// Confidence parameter delta in (0, 1].
    double delta = 0.05;
};

struct Posterior {
    double mean;
    double stdev;
};

struct Observation {
    Eigen::VectorXd input;
    double y;
};

/// Exact GP regression with an incrementally bordered Cholesky factor of K_t + lambda I.
class GpModel {
public:
    GpModel(Kernel kernel, GpHyper hyper, Eigen::Index input_dim);

    Posterior posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    /// Posterior over every row of `inputs`.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> posterior_batch(const Eigen::MatrixXd& inputs) const;
    /// Same, under a constant prior mean m instead of zero: mean = m + k^T (K + lambda I)^-1 (y - m).
    std::pair<Eigen::VectorXd, Eigen::VectorXd> posterior_batch(const Eigen::MatrixXd& inputs, double prior_mean) const;

    /// mu - beta * sigma.
    double lcb(const Eigen::Ref<const Eigen::VectorXd>& x, double beta) const;

    /// 1/2 log det(I + K_t / lambda), read off the Cholesky factor.
    double info_gain() const;

    /// Confidence width (sigma / sqrt(lambda)) sqrt(2 ln(1/delta) + 2 gamma_t) + B with the running
    /// realized information gain standing in for gamma_t.
    double beta_t() const;

    /// Snapshot with the batch appended.
    GpModel update(const std::vector<Observation>& batch) const;
    /// In-place append; InputError on non-finite y or wrong input size.
    void append(const std::vector<Observation>& batch);
    void append(const Eigen::Ref<const Eigen::VectorXd>& x, double y);

    std::size_t size() const { return static_cast<std::size_t>(n_); }
    Eigen::Index input_dim() const { return dim_; }
    const Kernel& kernel() const { return kernel_; }
    const GpHyper& hyper() const { return hyper_; }
    Eigen::MatrixXd inputs() const { return x_.topRows(n_); }
    Eigen::VectorXd targets() const { return y_.head(n_); }
    /// Lower-triangular factor of K_t + lambda I.
    Eigen::MatrixXd cholesky() const { return chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>(); }
    double info_gain_running() const { return info_gain_running_; }

    nlohmann::json to_json() const;
    static GpModel from_json(const nlohmann::json& j);

    /// Full refactorization cadence of the bordered factor.
    static constexpr Eigen::Index kRefactorEvery = 256;

private:
    void refactor();
    void solve_alpha();

    Kernel kernel_;
    GpHyper hyper_;
    Eigen::Index dim_;
    Eigen::Index n_ = 0;
    Eigen::MatrixXd x_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd chol_;
    Eigen::VectorXd alpha_;
    // (K + lambda I)^-1 1, for constant prior means.
    Eigen::VectorXd ones_alpha_;
    double info_gain_running_ = 0.0;
};

/// Exact GP posterior over a fixed finite design. Repeated observations of one design point are
/// pooled into their mean with noise lambda / n, so the factor grows with the number of distinct
/// points visited rather than the number of observations. Posterior, information gain and beta_t
/// equal those of a GpModel fed the same observations.
class PooledGp {
public:
    /// `design` rows are the candidate inputs.
    PooledGp(Kernel kernel, GpHyper hyper, Eigen::MatrixXd design);

    /// Adds one observation of design row `point`.
    void observe(std::size_t point, double y);

    /// Posterior mean and stdev at the design rows `points` under a constant prior mean.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> posterior(const std::vector<std::size_t>& points,
                                                          double prior_mean = 0.0) const;

    /// 1/2 log det(I + K_t / lambda) over all observations so far.
    double info_gain() const;
    double beta_t() const;

    std::size_t observations() const { return total_; }
    std::size_t distinct() const { return idx_.size(); }
    std::size_t design_size() const { return static_cast<std::size_t>(design_.rows()); }
    const GpHyper& hyper() const { return hyper_; }

    static constexpr std::size_t kRefactorEvery = 256;

private:
    void refactor();
    void solve_alpha(double prior_mean) const;

    GpHyper hyper_;
    Eigen::MatrixXd design_;
    Eigen::MatrixXd gram_;
    // Slot s holds design row idx_[s], observed count_[s] times with sum sum_[s].
    std::vector<std::size_t> idx_;
    std::vector<long> slot_;
    std::vector<double> count_;
    std::vector<double> sum_;
    Eigen::MatrixXd chol_;
    std::size_t total_ = 0;
    std::size_t since_refactor_ = 0;
    double info_gain_running_ = 0.0;
    // alpha for the last prior mean asked for.
    mutable Eigen::VectorXd alpha_;
    mutable double alpha_prior_ = 0.0;
    mutable bool alpha_valid_ = false;
};

enum class BetaMode { Theory, Constant };

struct BetaSchedule {
    BetaMode mode = BetaMode::Constant;
    double constant = 2.0;

    double at(const GpModel& model) const { return mode == BetaMode::Constant ? constant : model.beta_t(); }
    double at(const PooledGp& model) const { return mode == BetaMode::Constant ? constant : model.beta_t(); }
};

BetaMode parse_beta_mode(const std::string& name);

} // namespace gpmd
