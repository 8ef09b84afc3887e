#include "gpmd/gp_model.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "gpmd/errors.hpp"

namespace gpmd {

namespace {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

} // namespace

// ---------------------------------------------------------------------------------------------
// InputTransform

InputTransform InputTransform::identity(Eigen::Index dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

InputTransform InputTransform::standardize(const Eigen::MatrixXd& samples) {
    const Eigen::Index d = samples.cols();
    InputTransform t = identity(d);
    if (samples.rows() == 0) return t;
    t.offset = samples.colwise().mean().transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
        const double var = (samples.col(j).array() - t.offset(j)).square().mean();
        t.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return t;
}

Eigen::VectorXd InputTransform::apply(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != offset.size()) throw DomainError("input dimension does not match the transform");
    return ((x - offset).array() / scale.array()).matrix();
}

// ---------------------------------------------------------------------------------------------
// Kernel

Kernel Kernel::squared_exponential(Eigen::VectorXd lengthscales, double outputscale) {
    if (lengthscales.size() == 0 || (lengthscales.array() <= 0.0).any()) throw ParameterError("lengthscales must be positive");
    if (!(outputscale > 0.0)) throw ParameterError("outputscale must be positive");
    Kernel k;
    k.kind_ = Kind::SquaredExponential;
    k.lengthscales_ = std::move(lengthscales);
    k.outputscale_ = outputscale;
    return k;
}

Kernel Kernel::linear(double outputscale) {
    if (!(outputscale > 0.0)) throw ParameterError("outputscale must be positive");
    Kernel k;
    k.kind_ = Kind::Linear;
    k.outputscale_ = outputscale;
    return k;
}

Kernel Kernel::sum(Kernel a, Kernel b) {
    Kernel k;
    k.kind_ = Kind::Sum;
    k.left_ = std::make_shared<const Kernel>(std::move(a));
    k.right_ = std::make_shared<const Kernel>(std::move(b));
    return k;
}

Kernel Kernel::product(Kernel a, Kernel b) {
    Kernel k;
    k.kind_ = Kind::Product;
    k.left_ = std::make_shared<const Kernel>(std::move(a));
    k.right_ = std::make_shared<const Kernel>(std::move(b));
    return k;
}

Kernel Kernel::with_transform(InputTransform transform) const {
    if (transform.offset.size() != transform.scale.size() || (transform.scale.array() == 0.0).any())
        throw ParameterError("input transform needs matching offset/scale with non-zero scales");
    Kernel k = *this;
    k.transform_ = std::make_shared<const InputTransform>(std::move(transform));
    return k;
}

double Kernel::eval_raw(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) const {
    switch (kind_) {
    case Kind::SquaredExponential: {
        if (x.size() != y.size()) throw DomainError("kernel inputs differ in dimension");
        double r2 = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double l = lengthscales_.size() == 1 ? lengthscales_(0) : lengthscales_(i);
            const double d = (x(i) - y(i)) / l;
            r2 += d * d;
        }
        return outputscale_ * std::exp(-0.5 * r2);
    }
    case Kind::Linear: return outputscale_ * x.dot(y);
    case Kind::Sum: return (*left_)(x, y) + (*right_)(x, y);
    case Kind::Product: return (*left_)(x, y) * (*right_)(x, y);
    }
    return 0.0;
}

double Kernel::operator()(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y) const {
    if (transform_) return eval_raw(transform_->apply(x), transform_->apply(y));
    return eval_raw(x, y);
}

Eigen::MatrixXd Kernel::cross(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
    if (a.cols() != b.cols()) throw DomainError("kernel inputs differ in dimension");
    Eigen::MatrixXd ta = a;
    Eigen::MatrixXd tb = b;
    if (transform_) {
        if (transform_->offset.size() != a.cols()) throw DomainError("input dimension does not match the transform");
        const Eigen::RowVectorXd off = transform_->offset.transpose();
        const Eigen::RowVectorXd inv = transform_->scale.cwiseInverse().transpose();
        ta = ((ta.rowwise() - off).array().rowwise() * inv.array()).matrix();
        tb = ((tb.rowwise() - off).array().rowwise() * inv.array()).matrix();
    }
    switch (kind_) {
    case Kind::SquaredExponential: {
        const Eigen::Index d = ta.cols();
        Eigen::RowVectorXd inv_l(d);
        for (Eigen::Index i = 0; i < d; ++i) inv_l(i) = 1.0 / (lengthscales_.size() == 1 ? lengthscales_(0) : lengthscales_(i));
        ta = (ta.array().rowwise() * inv_l.array()).matrix();
        tb = (tb.array().rowwise() * inv_l.array()).matrix();
        const Eigen::VectorXd na = ta.rowwise().squaredNorm();
        const Eigen::VectorXd nb = tb.rowwise().squaredNorm();
        Eigen::MatrixXd r2 = -2.0 * ta * tb.transpose();
        r2.colwise() += na;
        r2.rowwise() += nb.transpose();
        return (outputscale_ * (-0.5 * r2.array().max(0.0)).exp()).matrix();
    }
    case Kind::Linear: return outputscale_ * ta * tb.transpose();
    case Kind::Sum: return left_->cross(ta, tb) + right_->cross(ta, tb);
    case Kind::Product: return left_->cross(ta, tb).cwiseProduct(right_->cross(ta, tb));
    }
    return {};
}

Eigen::VectorXd Kernel::diag(const Eigen::MatrixXd& a) const {
    Eigen::VectorXd out(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) out(i) = (*this)(a.row(i).transpose(), a.row(i).transpose());
    return out;
}

nlohmann::json Kernel::to_json() const {
    nlohmann::json j;
    switch (kind_) {
    case Kind::SquaredExponential:
        j["kind"] = "se";
        j["lengthscales"] = vec_to_json(lengthscales_);
        j["outputscale"] = outputscale_;
        break;
    case Kind::Linear:
        j["kind"] = "linear";
        j["outputscale"] = outputscale_;
        break;
    case Kind::Sum:
    case Kind::Product:
        j["kind"] = kind_ == Kind::Sum ? "sum" : "product";
        j["left"] = left_->to_json();
        j["right"] = right_->to_json();
        break;
    }
    if (transform_) j["transform"] = {{"offset", vec_to_json(transform_->offset)}, {"scale", vec_to_json(transform_->scale)}};
    return j;
}

Kernel Kernel::from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    Kernel k;
    if (kind == "se") k = squared_exponential(vec_from_json(j.at("lengthscales")), j.at("outputscale").get<double>());
    else if (kind == "linear") k = linear(j.at("outputscale").get<double>());
    else if (kind == "sum") k = sum(from_json(j.at("left")), from_json(j.at("right")));
    else if (kind == "product") k = product(from_json(j.at("left")), from_json(j.at("right")));
    else throw ParameterError("unknown kernel kind '" + kind + "'");
    if (j.contains("transform"))
        k = k.with_transform({vec_from_json(j["transform"].at("offset")), vec_from_json(j["transform"].at("scale"))});
    return k;
}

// ---------------------------------------------------------------------------------------------
// GpModel

GpModel::GpModel(Kernel kernel, GpHyper hyper, Eigen::Index input_dim)
    : kernel_(std::move(kernel)), hyper_(hyper), dim_(input_dim) {
    if (!(hyper_.lambda > 0.0)) throw ParameterError("lambda must be positive");
    if (!(hyper_.noise_sigma >= 0.0)) throw ParameterError("noise sigma must be non-negative");
    if (!(hyper_.delta > 0.0 && hyper_.delta <= 1.0)) throw ParameterError("delta must lie in (0, 1]");
    if (input_dim < 1) throw ParameterError("input dimension must be positive");
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> GpModel::posterior_batch(const Eigen::MatrixXd& inputs) const {
    return posterior_batch(inputs, 0.0);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> GpModel::posterior_batch(const Eigen::MatrixXd& inputs,
                                                                      double prior_mean) const {
    if (inputs.cols() != dim_) throw DomainError("input dimension mismatch");
    const Eigen::VectorXd prior = kernel_.diag(inputs);
    if (n_ == 0) return {Eigen::VectorXd::Constant(inputs.rows(), prior_mean), prior.cwiseMax(0.0).cwiseSqrt()};

    Eigen::MatrixXd ks = kernel_.cross(x_.topRows(n_), inputs); // n x m
    Eigen::VectorXd mean = ks.transpose() * alpha_;
    if (prior_mean != 0.0)
        mean.array() += prior_mean * (1.0 - (ks.transpose() * ones_alpha_).array());
    chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(ks);
    Eigen::VectorXd var = prior - ks.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < var.size(); ++i) {
        if (var(i) < 0.0) {
            if (var(i) < -1e-12 * std::max(1.0, prior(i)))
                throw SolverError("negative posterior variance", var(i));
            var(i) = 0.0;
        }
        var(i) = std::min(var(i), prior(i));
    }
    return {std::move(mean), var.cwiseSqrt()};
}

Posterior GpModel::posterior(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const Eigen::MatrixXd row = x.transpose();
    const auto [m, s] = posterior_batch(row);
    return {m(0), s(0)};
}

double GpModel::lcb(const Eigen::Ref<const Eigen::VectorXd>& x, double beta) const {
    const auto p = posterior(x);
    return p.mean - beta * p.stdev;
}

double GpModel::info_gain() const {
    if (n_ == 0) return 0.0;
    const double logdet = 2.0 * chol_.topLeftCorner(n_, n_).diagonal().array().log().sum();
    return 0.5 * (logdet - static_cast<double>(n_) * std::log(hyper_.lambda));
}

double GpModel::beta_t() const {
    const double gamma = info_gain_running_;
    return hyper_.noise_sigma / std::sqrt(hyper_.lambda) * std::sqrt(2.0 * std::log(1.0 / hyper_.delta) + 2.0 * gamma) +
           hyper_.rkhs_bound;
}

GpModel GpModel::update(const std::vector<Observation>& batch) const {
    GpModel copy = *this;
    copy.append(batch);
    return copy;
}

void GpModel::append(const std::vector<Observation>& batch) {
    for (const auto& obs : batch) {
        if (obs.input.size() != dim_) throw InputError("observation input has the wrong dimension");
        if (!std::isfinite(obs.y)) throw InputError("non-finite observation");
    }
    for (const auto& obs : batch) append(obs.input, obs.y);
}

void GpModel::append(const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
    if (x.size() != dim_) throw InputError("observation input has the wrong dimension");
    if (!std::isfinite(y)) throw InputError("non-finite observation");
    if (n_ == x_.rows()) {
        const Eigen::Index cap = std::max<Eigen::Index>(16, 2 * n_);
        x_.conservativeResize(cap, dim_);
        y_.conservativeResize(cap);
        chol_.conservativeResize(cap, cap);
    }
    x_.row(n_) = x.transpose();
    y_(n_) = y;

    bool bordered = false;
    if (n_ > 0 && (n_ + 1) % kRefactorEvery != 0) {
        // Border the existing factor: [L 0; l^T d] with L l = k and d^2 = k(x,x) + lambda - |l|^2.
        Eigen::VectorXd l = kernel_.cross(x_.topRows(n_), x.transpose());
        chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>().solveInPlace(l);
        const double d2 = kernel_(x, x) + hyper_.lambda - l.squaredNorm();
        if (d2 > 0.0) {
            chol_.row(n_).head(n_) = l.transpose();
            chol_(n_, n_) = std::sqrt(d2);
            chol_.col(n_).head(n_).setZero();
            bordered = true;
        }
    }
    ++n_;
    if (bordered) solve_alpha();
    else refactor();
    info_gain_running_ = std::max(info_gain_running_, info_gain());
}

void GpModel::refactor() {
    const Eigen::MatrixXd xs = x_.topRows(n_);
    Eigen::MatrixXd k = kernel_.cross(xs, xs);
    k.diagonal().array() += hyper_.lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) throw SolverError("Cholesky factorization of K + lambda I failed", 0.0);
    chol_.topLeftCorner(n_, n_) = llt.matrixL();
    solve_alpha();
}

void GpModel::solve_alpha() {
    const auto l = chol_.topLeftCorner(n_, n_).triangularView<Eigen::Lower>();
    alpha_ = l.solve(y_.head(n_));
    l.transpose().solveInPlace(alpha_);
    ones_alpha_ = l.solve(Eigen::VectorXd::Ones(n_));
    l.transpose().solveInPlace(ones_alpha_);
}

nlohmann::json GpModel::to_json() const {
    nlohmann::json inputs = nlohmann::json::array();
    for (Eigen::Index i = 0; i < n_; ++i) inputs.push_back(vec_to_json(x_.row(i).transpose()));
    return {{"kernel", kernel_.to_json()},
            {"lambda", hyper_.lambda},
            {"noise_sigma", hyper_.noise_sigma},
            {"rkhs_bound", hyper_.rkhs_bound},
            {"delta", hyper_.delta},
            {"input_dim", dim_},
            {"inputs", std::move(inputs)},
            {"targets", vec_to_json(y_.head(n_))},
            {"info_gain_running", info_gain_running_}};
}

GpModel GpModel::from_json(const nlohmann::json& j) {
    GpHyper hyper{j.at("lambda").get<double>(), j.at("noise_sigma").get<double>(), j.at("rkhs_bound").get<double>(),
                  j.at("delta").get<double>()};
    GpModel model(Kernel::from_json(j.at("kernel")), hyper, j.at("input_dim").get<Eigen::Index>());
    const auto& inputs = j.at("inputs");
    const auto targets = j.at("targets").get<std::vector<double>>();
    if (inputs.size() != targets.size()) throw InputError("snapshot inputs and targets differ in length");
    std::vector<Observation> batch;
    for (std::size_t i = 0; i < targets.size(); ++i) batch.push_back({vec_from_json(inputs[i]), targets[i]});
    model.append(batch);
    model.info_gain_running_ = std::max(model.info_gain_running_, j.value("info_gain_running", 0.0));
    return model;
}

// ---------------------------------------------------------------------------------------------
// PooledGp

PooledGp::PooledGp(Kernel kernel, GpHyper hyper, Eigen::MatrixXd design)
    : hyper_(hyper), design_(std::move(design)), slot_(static_cast<std::size_t>(design_.rows()), -1) {
    if (!(hyper_.lambda > 0.0)) throw ParameterError("lambda must be positive");
    if (design_.rows() == 0) throw ParameterError("empty design");
    gram_ = kernel.cross(design_, design_);
}

void PooledGp::observe(std::size_t point, double y) {
    if (point >= design_size()) throw DomainError("design point out of range");
    if (!std::isfinite(y)) throw InputError("non-finite observation");
    const double lam = hyper_.lambda;
    const auto n = static_cast<Eigen::Index>(idx_.size());
    const long s = slot_[point];
    bool ok = true;
    if (s < 0) {
        if (n == chol_.rows()) chol_.conservativeResize(std::max<Eigen::Index>(16, 2 * n), std::max<Eigen::Index>(16, 2 * n));
        Eigen::VectorXd l(n);
        for (Eigen::Index i = 0; i < n; ++i)
            l(i) = gram_(static_cast<Eigen::Index>(idx_[static_cast<std::size_t>(i)]), static_cast<Eigen::Index>(point));
        chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solveInPlace(l);
        const double d2 = gram_(static_cast<Eigen::Index>(point), static_cast<Eigen::Index>(point)) + lam - l.squaredNorm();
        slot_[point] = static_cast<long>(n);
        idx_.push_back(point);
        count_.push_back(1.0);
        sum_.push_back(y);
        if (d2 > 0.0) {
            chol_.row(n).head(n) = l.transpose();
            chol_(n, n) = std::sqrt(d2);
        } else {
            ok = false;
        }
    } else {
        // Diagonal lambda / c -> lambda / (c + 1): rank-one downdate with x = sqrt(delta) e_s.
        const auto k0 = static_cast<Eigen::Index>(s);
        const double c = count_[static_cast<std::size_t>(s)];
        count_[static_cast<std::size_t>(s)] = c + 1.0;
        sum_[static_cast<std::size_t>(s)] += y;
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        x(k0) = std::sqrt(lam / c - lam / (c + 1.0));
        for (Eigen::Index k = k0; k < n && ok; ++k) {
            const double lkk = chol_(k, k);
            const double r2 = lkk * lkk - x(k) * x(k);
            if (!(r2 > 0.0)) {
                ok = false;
                break;
            }
            const double r = std::sqrt(r2);
            const double cs = r / lkk;
            const double sn = x(k) / lkk;
            chol_(k, k) = r;
            for (Eigen::Index i = k + 1; i < n; ++i) {
                chol_(i, k) = (chol_(i, k) - sn * x(i)) / cs;
                x(i) = cs * x(i) - sn * chol_(i, k);
            }
        }
    }
    ++total_;
    if (!ok || ++since_refactor_ >= kRefactorEvery) refactor();
    alpha_valid_ = false;
    info_gain_running_ = std::max(info_gain_running_, info_gain());
}

void PooledGp::refactor() {
    const auto n = static_cast<Eigen::Index>(idx_.size());
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            a(i, j) = gram_(static_cast<Eigen::Index>(idx_[static_cast<std::size_t>(i)]),
                            static_cast<Eigen::Index>(idx_[static_cast<std::size_t>(j)]));
    for (Eigen::Index i = 0; i < n; ++i) a(i, i) += hyper_.lambda / count_[static_cast<std::size_t>(i)];
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw SolverError("Cholesky factorization of the pooled system failed", 0.0);
    chol_.topLeftCorner(n, n) = llt.matrixL();
    since_refactor_ = 0;
}

void PooledGp::solve_alpha(double prior_mean) const {
    const auto n = static_cast<Eigen::Index>(idx_.size());
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto s = static_cast<std::size_t>(i);
        b(i) = sum_[s] / count_[s] - prior_mean;
    }
    const auto l = chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>();
    l.solveInPlace(b);
    l.transpose().solveInPlace(b);
    alpha_ = std::move(b);
    alpha_prior_ = prior_mean;
    alpha_valid_ = true;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> PooledGp::posterior(const std::vector<std::size_t>& points,
                                                                double prior_mean) const {
    const auto q = static_cast<Eigen::Index>(points.size());
    const auto n = static_cast<Eigen::Index>(idx_.size());
    for (auto p : points)
        if (p >= design_size()) throw DomainError("design point out of range");
    Eigen::VectorXd mean = Eigen::VectorXd::Constant(q, prior_mean);
    Eigen::VectorXd sd(q);
    for (Eigen::Index j = 0; j < q; ++j) {
        const auto p = static_cast<Eigen::Index>(points[static_cast<std::size_t>(j)]);
        sd(j) = gram_(p, p);
    }
    if (n > 0) {
        if (!alpha_valid_ || alpha_prior_ != prior_mean) solve_alpha(prior_mean);
        Eigen::MatrixXd k(n, q);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < q; ++j)
                k(i, j) = gram_(static_cast<Eigen::Index>(idx_[static_cast<std::size_t>(i)]),
                                static_cast<Eigen::Index>(points[static_cast<std::size_t>(j)]));
        mean.noalias() += k.transpose() * alpha_;
        chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solveInPlace(k);
        sd -= k.colwise().squaredNorm().transpose();
    }
    sd = sd.cwiseMax(0.0).cwiseSqrt();
    return {mean, sd};
}

double PooledGp::info_gain() const {
    const auto n = static_cast<Eigen::Index>(idx_.size());
    if (n == 0) return 0.0;
    // log det(I_t + K_t / lambda) = log det(K_u + lambda C^-1) + sum log(c_s / lambda).
    double v = 2.0 * chol_.topLeftCorner(n, n).diagonal().array().log().sum();
    for (double c : count_) v += std::log(c / hyper_.lambda);
    return 0.5 * v;
}

double PooledGp::beta_t() const {
    return hyper_.noise_sigma / std::sqrt(hyper_.lambda) *
               std::sqrt(2.0 * std::log(1.0 / hyper_.delta) + 2.0 * info_gain_running_) +
           hyper_.rkhs_bound;
}

BetaMode parse_beta_mode(const std::string& name) {
    if (name == "theory") return BetaMode::Theory;
    if (name == "constant") return BetaMode::Constant;
    throw ParameterError("unknown beta mode '" + name + "'");
}

} // namespace gpmd
