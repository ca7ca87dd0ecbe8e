#include "dualmpc/gp.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace dmpc::gp {

namespace {

constexpr double kJitterStartFactor = 1e-10;
constexpr double kJitterMaxFactor = 1e-4;

void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw std::invalid_argument(std::string(what) + " contains non-finite values");
  }
}

/// Cholesky of K + (offset + jitter) I with tenfold jitter escalation.
std::pair<Eigen::LLT<Eigen::MatrixXd>, double> robust_llt(
    const Eigen::MatrixXd& gram, double offset, double prior_variance,
    const char* what) {
  double jitter = kJitterStartFactor * prior_variance;
  const double max_jitter = kJitterMaxFactor * prior_variance;
  const Eigen::MatrixXd eye =
      Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
  while (true) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram + (offset + jitter) * eye);
    if (llt.info() == Eigen::Success) {
      return {std::move(llt), jitter};
    }
    jitter *= 10.0;
    if (jitter > max_jitter) {
      std::ostringstream msg;
      msg << what << ": Gram matrix (" << gram.rows() << "x" << gram.cols()
          << ") stayed indefinite after jitter escalation to " << max_jitter
          << " (diag range [" << gram.diagonal().minCoeff() << ", "
          << gram.diagonal().maxCoeff() << "])";
      throw NumericalError(msg.str());
    }
  }
}

/// Scaled-feature kernel helper shared by both model flavours. Works on
/// pre-mapped feature vectors.
double kernel_on_features(const KernelParams& p, const Eigen::VectorXd& fa,
                          const Eigen::VectorXd& fb) {
  const Eigen::ArrayXd d = (fa - fb).array() / p.length_scales.array();
  return p.prior_variance * std::exp(-0.5 * d.square().sum());
}

Eigen::MatrixXd map_features(const KernelParams& p,
                             const std::vector<Eigen::VectorXd>& inputs) {
  Eigen::MatrixXd f(p.feature_count(), static_cast<Eigen::Index>(inputs.size()));
  for (Eigen::Index i = 0; i < f.cols(); ++i) {
    const Eigen::VectorXd& z = inputs[static_cast<std::size_t>(i)];
    if (z.size() != p.input_dim()) {
      throw std::invalid_argument("training/inducing input dimension mismatch");
    }
    check_finite(z, "GP input");
    f.col(i) = p.feature_map * z;
  }
  return f;
}

Eigen::MatrixXd gram_matrix(const KernelParams& p, const Eigen::MatrixXd& fa,
                            const Eigen::MatrixXd& fb) {
  Eigen::MatrixXd k(fa.cols(), fb.cols());
  for (Eigen::Index i = 0; i < fa.cols(); ++i) {
    for (Eigen::Index j = 0; j < fb.cols(); ++j) {
      k(i, j) = kernel_on_features(p, fa.col(i), fb.col(j));
    }
  }
  return k;
}

/// Kernel vector between one raw test input and a bank of mapped features,
/// plus the per-column scaled feature residuals needed for derivatives.
struct QueryKernel {
  Eigen::VectorXd values;  ///< k(z, bank_i)
  Eigen::VectorXd fz;      ///< mapped test features
};

QueryKernel query_kernel(const KernelParams& p, const Eigen::VectorXd& z,
                         const Eigen::MatrixXd& bank) {
  if (z.size() != p.input_dim()) {
    throw std::invalid_argument("posterior query dimension mismatch");
  }
  check_finite(z, "posterior query");
  QueryKernel q;
  q.fz = p.feature_map * z;
  q.values.resize(bank.cols());
  for (Eigen::Index i = 0; i < bank.cols(); ++i) {
    q.values[i] = kernel_on_features(p, q.fz, bank.col(i));
  }
  return q;
}

/// Gradient of the weighted kernel sum  sum_i w_i k(z, bank_i)  w.r.t. z.
Eigen::VectorXd weighted_kernel_gradient(const KernelParams& p,
                                         const QueryKernel& q,
                                         const Eigen::MatrixXd& bank,
                                         const Eigen::VectorXd& w) {
  const Eigen::ArrayXd inv_sq = p.length_scales.array().square().inverse();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(p.feature_count());
  for (Eigen::Index i = 0; i < bank.cols(); ++i) {
    const Eigen::VectorXd scaled = ((q.fz - bank.col(i)).array() * inv_sq).matrix();
    acc -= (w[i] * q.values[i]) * scaled;
  }
  return p.feature_map.transpose() * acc;
}

/// Hessian of the weighted kernel sum w.r.t. z.
Eigen::MatrixXd weighted_kernel_hessian(const KernelParams& p,
                                        const QueryKernel& q,
                                        const Eigen::MatrixXd& bank,
                                        const Eigen::VectorXd& w) {
  const Eigen::ArrayXd inv_sq = p.length_scales.array().square().inverse();
  const Eigen::Index nf = p.feature_count();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(nf, nf);
  double wk_sum = 0.0;
  for (Eigen::Index i = 0; i < bank.cols(); ++i) {
    const Eigen::VectorXd scaled = ((q.fz - bank.col(i)).array() * inv_sq).matrix();
    const double wk = w[i] * q.values[i];
    acc += wk * (scaled * scaled.transpose());
    wk_sum += wk;
  }
  acc -= wk_sum * inv_sq.matrix().asDiagonal().toDenseMatrix();
  return p.feature_map.transpose() * acc * p.feature_map;
}

}  // namespace

void KernelParams::validate() const {
  if (!(prior_variance > 0.0) || !std::isfinite(prior_variance)) {
    throw std::invalid_argument("prior_variance must be positive and finite");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw std::invalid_argument("noise_variance must be >= 0 and finite");
  }
  if (feature_map.rows() == 0 || feature_map.cols() == 0) {
    throw std::invalid_argument("feature_map must be non-empty");
  }
  if (length_scales.size() != feature_map.rows()) {
    throw std::invalid_argument("need one length scale per feature row");
  }
  if (!(length_scales.array() > 0.0).all() || !length_scales.allFinite()) {
    throw std::invalid_argument("length scales must be positive and finite");
  }
  if (!feature_map.allFinite()) {
    throw std::invalid_argument("feature_map contains non-finite values");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(feature_map);
  if (qr.rank() < feature_map.rows()) {
    throw std::invalid_argument("feature_map must have full row rank");
  }
}

double kernel_eval(const KernelParams& params, const Eigen::VectorXd& a,
                   const Eigen::VectorXd& b) {
  if (a.size() != params.input_dim() || b.size() != params.input_dim()) {
    throw std::invalid_argument("kernel_eval input dimension mismatch");
  }
  check_finite(a, "kernel input");
  check_finite(b, "kernel input");
  return kernel_on_features(params, params.feature_map * a, params.feature_map * b);
}

void TrainingSet::append(const Eigen::VectorXd& input, double output) {
  check_finite(input, "training input");
  if (!std::isfinite(output)) {
    throw std::invalid_argument("training output must be finite");
  }
  if (!inputs_.empty() && input.size() != inputs_.front().size()) {
    throw std::invalid_argument("training input dimension changed mid-set");
  }
  inputs_.push_back(input);
  outputs_.push_back(output);
  if (capacity_ > 0 && inputs_.size() > capacity_) {
    inputs_.erase(inputs_.begin());
    outputs_.erase(outputs_.begin());
  }
}

GpModel GpModel::fit(const KernelParams& params, const TrainingSet& data) {
  params.validate();
  GpModel m;
  m.params_ = params;
  const std::size_t n = data.size();
  if (n == 0) {
    m.features_.resize(params.feature_count(), 0);
    m.y_.resize(0);
    m.alpha_.resize(0);
    return m;
  }
  std::vector<Eigen::VectorXd> inputs;
  inputs.reserve(n);
  m.y_.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(data.input(i));
    m.y_[static_cast<Eigen::Index>(i)] = data.output(i);
  }
  m.features_ = map_features(params, inputs);
  const Eigen::MatrixXd gram = gram_matrix(params, m.features_, m.features_);
  auto [llt, jitter] =
      robust_llt(gram, params.noise_variance, params.prior_variance, "GpModel::fit");
  m.gram_llt_ = std::move(llt);
  m.jitter_ = jitter;
  m.alpha_ = m.gram_llt_.solve(m.y_);
  return m;
}

PosteriorEval GpModel::posterior(const Eigen::VectorXd& z) const {
  PosteriorEval out;
  if (size() == 0) {
    if (z.size() != params_.input_dim()) {
      throw std::invalid_argument("posterior query dimension mismatch");
    }
    check_finite(z, "posterior query");
    out.variance = params_.prior_variance;
    out.mean_gradient = Eigen::VectorXd::Zero(params_.input_dim());
    return out;
  }
  const QueryKernel q = query_kernel(params_, z, features_);
  out.mean = q.values.dot(alpha_);
  const Eigen::VectorXd w = gram_llt_.solve(q.values);
  out.variance = std::max(0.0, params_.prior_variance - q.values.dot(w));
  out.mean_gradient = weighted_kernel_gradient(params_, q, features_, alpha_);
  return out;
}

PosteriorDerivatives GpModel::posterior_derivatives(const Eigen::VectorXd& z) const {
  PosteriorDerivatives out;
  const Eigen::Index nz = params_.input_dim();
  if (size() == 0) {
    const PosteriorEval basic = posterior(z);
    out.mean = basic.mean;
    out.variance = basic.variance;
    out.mean_gradient = basic.mean_gradient;
    out.mean_hessian = Eigen::MatrixXd::Zero(nz, nz);
    out.variance_gradient = Eigen::VectorXd::Zero(nz);
    return out;
  }
  const QueryKernel q = query_kernel(params_, z, features_);
  out.mean = q.values.dot(alpha_);
  const Eigen::VectorXd w = gram_llt_.solve(q.values);
  const double raw_variance = params_.prior_variance - q.values.dot(w);
  out.variance = std::max(0.0, raw_variance);
  out.mean_gradient = weighted_kernel_gradient(params_, q, features_, alpha_);
  out.mean_hessian = weighted_kernel_hessian(params_, q, features_, alpha_);
  // variance = prior - k^T K^-1 k, so d var = -2 (K^-1 k)^T dk. Frozen at
  // zero whenever the value itself clamps, keeping value and slope coherent.
  if (raw_variance > 0.0) {
    out.variance_gradient =
        -2.0 * weighted_kernel_gradient(params_, q, features_, w);
  } else {
    out.variance_gradient = Eigen::VectorXd::Zero(nz);
  }
  return out;
}

SparseGpModel SparseGpModel::fit(const KernelParams& params,
                                 const TrainingSet& data,
                                 const std::vector<Eigen::VectorXd>& inducing) {
  params.validate();
  if (inducing.empty()) {
    throw std::invalid_argument("sparse fit needs at least one inducing input");
  }
  SparseGpModel m;
  m.params_ = params;
  m.training_count_ = data.size();
  m.inducing_features_ = map_features(params, inducing);

  const Eigen::MatrixXd kmm =
      gram_matrix(params, m.inducing_features_, m.inducing_features_);
  auto [kmm_llt, kmm_jitter] =
      robust_llt(kmm, 0.0, params.prior_variance, "SparseGpModel::fit (K_MM)");
  m.kmm_llt_ = std::move(kmm_llt);

  const Eigen::Index mm = m.inducing_features_.cols();
  if (data.empty()) {
    // Pure prior: keep both factors identical so the posterior reduces to the
    // prior exactly and the mean weights vanish.
    m.bmm_llt_ = m.kmm_llt_;
    m.weights_ = Eigen::VectorXd::Zero(mm);
    return m;
  }

  std::vector<Eigen::VectorXd> inputs;
  inputs.reserve(data.size());
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    inputs.push_back(data.input(i));
    y[static_cast<Eigen::Index>(i)] = data.output(i);
  }
  const Eigen::MatrixXd train_features = map_features(params, inputs);
  const Eigen::MatrixXd kmn =
      gram_matrix(params, m.inducing_features_, train_features);

  // Per-point residual variances of the low-rank approximation, floored at
  // zero, plus observation noise and a jitter floor keeping them invertible.
  const Eigen::MatrixXd v = m.kmm_llt_.matrixL().solve(kmn);
  const double lambda_floor =
      params.noise_variance + kJitterStartFactor * params.prior_variance;
  Eigen::VectorXd lambda(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double resid = params.prior_variance - v.col(i).squaredNorm();
    lambda[i] = std::max(0.0, resid) + lambda_floor;
  }

  const Eigen::MatrixXd kmn_scaled = kmn * lambda.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd bmm =
      (kmm + (kmm_jitter)*Eigen::MatrixXd::Identity(mm, mm) +
       kmn_scaled * kmn.transpose());
  auto [bmm_llt, bmm_jitter] =
      robust_llt(bmm, 0.0, params.prior_variance, "SparseGpModel::fit (B_MM)");
  (void)bmm_jitter;
  m.bmm_llt_ = std::move(bmm_llt);
  m.weights_ = m.bmm_llt_.solve(kmn_scaled * y);
  return m;
}

PosteriorEval SparseGpModel::posterior(const Eigen::VectorXd& z) const {
  PosteriorEval out;
  if (training_count_ == 0) {
    if (z.size() != params_.input_dim()) {
      throw std::invalid_argument("posterior query dimension mismatch");
    }
    check_finite(z, "posterior query");
    out.variance = params_.prior_variance;
    out.mean_gradient = Eigen::VectorXd::Zero(params_.input_dim());
    return out;
  }
  const QueryKernel q = query_kernel(params_, z, inducing_features_);
  out.mean = q.values.dot(weights_);
  const Eigen::VectorXd wk = kmm_llt_.solve(q.values);
  const Eigen::VectorXd wb = bmm_llt_.solve(q.values);
  out.variance = std::max(
      0.0, params_.prior_variance - q.values.dot(wk) + q.values.dot(wb));
  out.mean_gradient =
      weighted_kernel_gradient(params_, q, inducing_features_, weights_);
  return out;
}

PosteriorDerivatives SparseGpModel::posterior_derivatives(
    const Eigen::VectorXd& z) const {
  PosteriorDerivatives out;
  const Eigen::Index nz = params_.input_dim();
  if (training_count_ == 0) {
    const PosteriorEval basic = posterior(z);
    out.mean = basic.mean;
    out.variance = basic.variance;
    out.mean_gradient = basic.mean_gradient;
    out.mean_hessian = Eigen::MatrixXd::Zero(nz, nz);
    out.variance_gradient = Eigen::VectorXd::Zero(nz);
    return out;
  }
  const QueryKernel q = query_kernel(params_, z, inducing_features_);
  out.mean = q.values.dot(weights_);
  const Eigen::VectorXd wk = kmm_llt_.solve(q.values);
  const Eigen::VectorXd wb = bmm_llt_.solve(q.values);
  const double raw_variance =
      params_.prior_variance - q.values.dot(wk) + q.values.dot(wb);
  out.variance = std::max(0.0, raw_variance);
  out.mean_gradient =
      weighted_kernel_gradient(params_, q, inducing_features_, weights_);
  out.mean_hessian =
      weighted_kernel_hessian(params_, q, inducing_features_, weights_);
  // variance = prior - k^T (K_MM^-1 - B^-1) k; chain rule through k only,
  // with the slope frozen at zero whenever the value clamps.
  if (raw_variance > 0.0) {
    out.variance_gradient = -2.0 * weighted_kernel_gradient(
                                       params_, q, inducing_features_, wk - wb);
  } else {
    out.variance_gradient = Eigen::VectorXd::Zero(nz);
  }
  return out;
}

}  // namespace dmpc::gp
