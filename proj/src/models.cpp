#include "gformula/models.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gformula/errors.hpp"
#include "gformula/rng.hpp"

namespace gformula {

namespace {

constexpr double kProbEps = 1e-10;

double expit(double eta) {
  if (eta > 0) {
    const double e = std::exp(-eta);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// Rank check via pivoted QR; names the aliased columns on failure.
void require_full_rank(const DesignMatrix& d, const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.values);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  if (rank >= d.values.cols()) return;
  const auto& perm = qr.colsPermutation().indices();
  std::ostringstream os;
  os << what << ": design matrix is rank deficient (rank " << rank << " of " << d.values.cols()
     << "); aliased columns:";
  for (Eigen::Index i = rank; i < d.values.cols(); ++i)
    os << " " << d.column_names[static_cast<std::size_t>(perm(i))];
  throw FitError(os.str());
}

double raw_rmse(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  return std::sqrt((y - mu).squaredNorm() / static_cast<double>(y.size()));
}

}  // namespace

double link_inverse(Link link, double eta) {
  switch (link) {
    case Link::Logit:
      return expit(eta);
    case Link::Probit:
      return norm_cdf(eta);
    case Link::Identity:
      return eta;
    case Link::Log:
      return std::exp(eta);
  }
  return eta;
}

double FittedModel::linear_predictor(const double* row) const {
  double eta = 0.0;
  for (Eigen::Index j = 0; j < coef.cols(); ++j) eta += coef(0, j) * row[j];
  return eta;
}

double FittedModel::predict_mean(std::span<const double> row) const {
  if (row.size() != width())
    throw ShapeError("predict: row width " + std::to_string(row.size()) +
                     " does not match coefficient length " + std::to_string(width()));
  if (family == Family::Multinomial)
    throw ShapeError("predict_mean called on a multinomial model; use predict_probs");
  return link_inverse(link, linear_predictor(row.data()));
}

void FittedModel::predict_probs(std::span<const double> row, std::vector<double>& out) const {
  if (family != Family::Multinomial) throw ShapeError("predict_probs requires a multinomial model");
  if (row.size() != width())
    throw ShapeError("predict: row width " + std::to_string(row.size()) +
                     " does not match coefficient length " + std::to_string(width()));
  const auto m = static_cast<std::size_t>(coef.rows()) + 1;
  out.assign(m, 0.0);
  double maxeta = 0.0;  // reference class eta is 0
  for (std::size_t c = 1; c < m; ++c) {
    double eta = 0.0;
    for (Eigen::Index j = 0; j < coef.cols(); ++j)
      eta += coef(static_cast<Eigen::Index>(c - 1), j) * row[j];
    out[c] = eta;
    maxeta = std::max(maxeta, eta);
  }
  double denom = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    out[c] = std::exp(out[c] - maxeta);
    denom += out[c];
  }
  for (auto& p : out) p /= denom;
}

FittedModel fit_binomial(const DesignMatrix& design, Link link) {
  if (link != Link::Logit && link != Link::Probit)
    throw ArgumentError("fit_binomial supports logit and probit links");
  const Eigen::MatrixXd& X = design.values;
  const Eigen::VectorXd& y = design.response;
  const auto n = X.rows();
  const auto p = X.cols();
  for (Eigen::Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0)
      throw DataError("fit_binomial: response values must be 0 or 1");
  require_full_rank(design, "fit_binomial");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mu(n), w(n), z(n);
  double deviance = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;
  Eigen::MatrixXd xtwx(p, p);
  for (; iter < 100; ++iter) {
    const Eigen::VectorXd eta = X * beta;
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double m = link_inverse(link, eta(i));
      m = std::min(1.0 - kProbEps, std::max(kProbEps, m));
      mu(i) = m;
      const double dmude = link == Link::Logit ? m * (1.0 - m) : norm_pdf(eta(i));
      w(i) = dmude * dmude / (m * (1.0 - m));
      z(i) = eta(i) + (y(i) - m) / dmude;
      dev -= 2.0 * (y(i) == 1.0 ? std::log(m) : std::log(1.0 - m));
    }
    xtwx = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd beta_new = xtwx.ldlt().solve(X.transpose() * (w.asDiagonal() * z));
    const double coef_change = (beta_new - beta).cwiseAbs().maxCoeff();
    const double dev_change = std::fabs(deviance - dev) / (std::fabs(dev) + 0.1);
    beta = beta_new;
    deviance = dev;
    if (coef_change < 1e-8 || (iter > 0 && dev_change < 1e-10)) {
      converged = true;
      ++iter;
      break;
    }
  }

  FittedModel fm;
  fm.family = Family::Binomial;
  fm.link = link;
  fm.coef = beta.transpose();
  fm.coef_names = design.column_names;
  fm.n_obs = static_cast<std::size_t>(n);
  fm.resp_min = y.minCoeff();
  fm.resp_max = y.maxCoeff();

  const Eigen::VectorXd eta = X * beta;
  bool pinned = false;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double m = link_inverse(link, eta(i));
    if (m < kProbEps || m > 1.0 - kProbEps) pinned = true;
    m = std::min(1.0 - kProbEps, std::max(kProbEps, m));
    mu(i) = m;
    ll += y(i) == 1.0 ? std::log(m) : std::log(1.0 - m);
  }
  fm.diag.converged = converged && !pinned;
  fm.diag.iterations = iter;
  fm.diag.log_likelihood = ll;
  fm.diag.rmse = raw_rmse(y, mu);
  const Eigen::MatrixXd info_inv = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fm.stderrs = info_inv.diagonal().cwiseMax(0.0).cwiseSqrt().transpose();
  return fm;
}

FittedModel fit_gaussian(const DesignMatrix& design, Link link) {
  if (link != Link::Identity && link != Link::Log)
    throw ArgumentError("fit_gaussian supports identity and log links");
  const Eigen::MatrixXd& X = design.values;
  const Eigen::VectorXd& y = design.response;
  const auto n = X.rows();
  const auto p = X.cols();
  if (n <= p)
    throw FitError("fit_gaussian: n (" + std::to_string(n) + ") must exceed the number of columns (" +
                   std::to_string(p) + ") for a residual variance estimate");
  require_full_rank(design, "fit_gaussian");

  FittedModel fm;
  fm.family = Family::Gaussian;
  fm.link = link;
  fm.coef_names = design.column_names;
  fm.n_obs = static_cast<std::size_t>(n);
  fm.resp_min = y.minCoeff();
  fm.resp_max = y.maxCoeff();

  Eigen::VectorXd beta(p);
  Eigen::VectorXd mu(n);
  if (link == Link::Identity) {
    beta = X.colPivHouseholderQr().solve(y);
    mu = X * beta;
    fm.diag.converged = true;
    fm.diag.iterations = 1;
    const Eigen::MatrixXd xtx_inv =
        (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    const double rss = (y - mu).squaredNorm();
    fm.residual_mse = rss / static_cast<double>(n - p);
    fm.stderrs = (fm.residual_mse * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt().transpose();
  } else {
    beta = Eigen::VectorXd::Zero(p);
    bool converged = false;
    int iter = 0;
    Eigen::MatrixXd xtwx(p, p);
    Eigen::VectorXd w(n), z(n);
    double rss_prev = std::numeric_limits<double>::infinity();
    for (; iter < 100; ++iter) {
      const Eigen::VectorXd eta = X * beta;
      double rss = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double m = std::exp(eta(i));
        if (!(m > 0.0) || !std::isfinite(m))
          throw FitError("fit_gaussian: fitted mean left the positive range under the log link");
        w(i) = m * m;
        z(i) = eta(i) + (y(i) - m) / m;
        rss += (y(i) - m) * (y(i) - m);
      }
      xtwx = X.transpose() * w.asDiagonal() * X;
      const Eigen::VectorXd beta_new = xtwx.ldlt().solve(X.transpose() * (w.asDiagonal() * z));
      const double coef_change = (beta_new - beta).cwiseAbs().maxCoeff();
      const double rss_change = std::fabs(rss_prev - rss) / (std::fabs(rss) + 0.1);
      beta = beta_new;
      rss_prev = rss;
      if (coef_change < 1e-8 || (iter > 0 && rss_change < 1e-10)) {
        converged = true;
        ++iter;
        break;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) mu(i) = std::exp((X.row(i) * beta).value());
    const double rss = (y - mu).squaredNorm();
    fm.residual_mse = rss / static_cast<double>(n - p);
    fm.diag.converged = converged;
    fm.diag.iterations = iter;
    const Eigen::MatrixXd info_inv = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fm.stderrs =
        (fm.residual_mse * info_inv.diagonal()).cwiseMax(0.0).cwiseSqrt().transpose();
  }
  fm.coef = beta.transpose();
  const double sigma2_ml = (y - mu).squaredNorm() / static_cast<double>(n);
  fm.diag.log_likelihood =
      -0.5 * static_cast<double>(n) * (std::log(2.0 * M_PI * std::max(sigma2_ml, 1e-300)) + 1.0);
  fm.diag.rmse = raw_rmse(y, mu);
  return fm;
}

FittedModel fit_multinomial(const DesignMatrix& design, const Levels& levels) {
  const Eigen::MatrixXd& X = design.values;
  const Eigen::VectorXd& y = design.response;
  const auto n = X.rows();
  const auto p = X.cols();
  const auto m = levels.size();
  if (m < 2) throw FitError("fit_multinomial: needs at least 2 response levels");
  require_full_rank(design, "fit_multinomial");

  std::vector<std::size_t> counts(m, 0);
  std::vector<int> cls(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto l = levels.level_of(y(i));
    if (!l) throw DataError("fit_multinomial: response value outside the level set");
    cls[static_cast<std::size_t>(i)] = static_cast<int>(*l);
    ++counts[*l];
  }
  for (std::size_t l = 0; l < m; ++l)
    if (counts[l] == 0)
      throw FitError("fit_multinomial: level '" + levels.labels[l] +
                     "' is absent from the fitting records");

  const auto dim = static_cast<Eigen::Index>(m - 1) * p;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd probs(n, static_cast<Eigen::Index>(m));

  auto loglik = [&](const Eigen::VectorXd& th, Eigen::MatrixXd& pr) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double maxeta = 0.0;
      pr(i, 0) = 0.0;
      for (std::size_t c = 1; c < m; ++c) {
        double eta = 0.0;
        for (Eigen::Index j = 0; j < p; ++j)
          eta += th(static_cast<Eigen::Index>(c - 1) * p + j) * X(i, j);
        pr(i, static_cast<Eigen::Index>(c)) = eta;
        maxeta = std::max(maxeta, eta);
      }
      double denom = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        pr(i, static_cast<Eigen::Index>(c)) =
            std::exp(pr(i, static_cast<Eigen::Index>(c)) - maxeta);
        denom += pr(i, static_cast<Eigen::Index>(c));
      }
      for (std::size_t c = 0; c < m; ++c) pr(i, static_cast<Eigen::Index>(c)) /= denom;
      ll += std::log(std::max(pr(i, cls[static_cast<std::size_t>(i)]), 1e-300));
    }
    return ll;
  };

  double ll = loglik(theta, probs);
  bool converged = false;
  int iter = 0;
  Eigen::VectorXd grad(dim);
  Eigen::MatrixXd hess(dim, dim);
  for (; iter < 100; ++iter) {
    grad.setZero();
    hess.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t c = 1; c < m; ++c) {
        const double pc = probs(i, static_cast<Eigen::Index>(c));
        const double resid = (cls[static_cast<std::size_t>(i)] == static_cast<int>(c) ? 1.0 : 0.0) - pc;
        for (Eigen::Index j = 0; j < p; ++j)
          grad(static_cast<Eigen::Index>(c - 1) * p + j) += resid * X(i, j);
        for (std::size_t d = 1; d < m; ++d) {
          const double pd = probs(i, static_cast<Eigen::Index>(d));
          const double wcd = pc * ((c == d ? 1.0 : 0.0) - pd);
          for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index l = 0; l < p; ++l)
              hess(static_cast<Eigen::Index>(c - 1) * p + j,
                   static_cast<Eigen::Index>(d - 1) * p + l) += wcd * X(i, j) * X(i, l);
        }
      }
    }
    if (grad.cwiseAbs().maxCoeff() < 1e-10) {
      converged = true;
      break;
    }
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd theta_new = theta + step;
    double ll_new = loglik(theta_new, probs);
    for (int h = 0; h < 30 && !(ll_new >= ll); ++h) {
      scale *= 0.5;
      theta_new = theta + scale * step;
      ll_new = loglik(theta_new, probs);
    }
    const double change = (theta_new - theta).cwiseAbs().maxCoeff();
    theta = theta_new;
    ll = ll_new;
    if (change < 1e-8) {
      converged = true;
      ++iter;
      break;
    }
  }
  ll = loglik(theta, probs);

  FittedModel fm;
  fm.family = Family::Multinomial;
  fm.link = Link::Logit;
  fm.coef.resize(static_cast<Eigen::Index>(m - 1), p);
  for (std::size_t c = 1; c < m; ++c)
    for (Eigen::Index j = 0; j < p; ++j)
      fm.coef(static_cast<Eigen::Index>(c - 1), j) =
          theta(static_cast<Eigen::Index>(c - 1) * p + j);
  fm.coef_names = design.column_names;
  fm.response_levels = levels.labels;
  fm.n_obs = static_cast<std::size_t>(n);
  fm.resp_min = y.minCoeff();
  fm.resp_max = y.maxCoeff();
  bool pinned = false;
  double sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t c = 0; c < m; ++c) {
      const double pc = probs(i, static_cast<Eigen::Index>(c));
      if (pc < kProbEps || pc > 1.0 - kProbEps) pinned = true;
      const double ind = cls[static_cast<std::size_t>(i)] == static_cast<int>(c) ? 1.0 : 0.0;
      sq += (ind - pc) * (ind - pc);
    }
  fm.diag.converged = converged && !pinned;
  fm.diag.iterations = iter;
  fm.diag.log_likelihood = ll;
  fm.diag.rmse = std::sqrt(sq / static_cast<double>(n));
  Eigen::VectorXd se(dim);
  // Recompute the Hessian at the optimum for standard errors.
  {
    Eigen::MatrixXd hess2 = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < n; ++i)
      for (std::size_t c = 1; c < m; ++c) {
        const double pc = probs(i, static_cast<Eigen::Index>(c));
        for (std::size_t d = 1; d < m; ++d) {
          const double pd = probs(i, static_cast<Eigen::Index>(d));
          const double wcd = pc * ((c == d ? 1.0 : 0.0) - pd);
          for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index l = 0; l < p; ++l)
              hess2(static_cast<Eigen::Index>(c - 1) * p + j,
                    static_cast<Eigen::Index>(d - 1) * p + l) += wcd * X(i, j) * X(i, l);
        }
      }
    const Eigen::MatrixXd inv = hess2.ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
    se = inv.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  fm.stderrs.resize(static_cast<Eigen::Index>(m - 1), p);
  for (std::size_t c = 1; c < m; ++c)
    for (Eigen::Index j = 0; j < p; ++j)
      fm.stderrs(static_cast<Eigen::Index>(c - 1), j) =
          se(static_cast<Eigen::Index>(c - 1) * p + j);
  return fm;
}

double log_norm_cdf(double x) {
  if (x > -37.0) return std::log(norm_cdf(x));
  const double t = 1.0 / (x * x);
  return -0.5 * x * x - std::log(-x) - 0.5 * std::log(2.0 * M_PI) +
         std::log1p(-t * (1.0 - 3.0 * t * (1.0 - 5.0 * t)));
}

FittedModel fit_truncated_normal(const DesignMatrix& design, double point,
                                 TruncationDirection direction) {
  const Eigen::MatrixXd& X = design.values;
  const Eigen::VectorXd& y = design.response;
  const auto n = X.rows();
  const auto p = X.cols();
  if (n <= p) throw FitError("fit_truncated_normal: n must exceed the number of columns");
  require_full_rank(design, "fit_truncated_normal");
  const bool truncated = std::isfinite(point);
  if (truncated) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (direction == TruncationDirection::Left && !(y(i) > point))
        throw DataError("fit_truncated_normal: response " + std::to_string(y(i)) +
                        " violates the left truncation point " + std::to_string(point));
      if (direction == TruncationDirection::Right && !(y(i) < point))
        throw DataError("fit_truncated_normal: response " + std::to_string(y(i)) +
                        " violates the right truncation point " + std::to_string(point));
    }
  }

  // theta = (beta, log sigma), initialized from least squares.
  Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  double sigma =
      std::max(1e-6, std::sqrt((y - X * beta).squaredNorm() / static_cast<double>(n)));
  const auto dim = p + 1;
  Eigen::VectorXd theta(dim);
  theta.head(p) = beta;
  theta(p) = std::log(sigma);

  auto loglik = [&](const Eigen::VectorXd& th) {
    const double s = std::exp(th(p));
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = (X.row(i) * th.head(p)).value();
      const double r = (y(i) - mu) / s;
      ll += -std::log(s) - 0.5 * r * r - 0.5 * std::log(2.0 * M_PI);
      if (truncated) {
        const double d = direction == TruncationDirection::Left ? (mu - point) / s : (point - mu) / s;
        ll -= log_norm_cdf(d);
      }
    }
    return ll;
  };

  auto gradient = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
    const double s = std::exp(th(p));
    g.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = (X.row(i) * th.head(p)).value();
      const double r = (y(i) - mu) / s;
      double gb = r / s;
      double gt = -1.0 + r * r;
      if (truncated) {
        const double d = direction == TruncationDirection::Left ? (mu - point) / s : (point - mu) / s;
        const double lam = inverse_mills(d);
        gb += (direction == TruncationDirection::Left ? -lam : lam) / s;
        gt += lam * d;
      }
      g.head(p) += gb * X.row(i).transpose();
      g(p) += gt;
    }
  };

  Eigen::VectorXd grad(dim), gtmp(dim);
  double ll = loglik(theta);
  bool converged = false;
  int iter = 0;
  Eigen::MatrixXd hess(dim, dim);
  auto fd_hessian = [&](const Eigen::VectorXd& th) {
    const double h0 = 1e-5;
    Eigen::VectorXd gp(dim), gm(dim), thp(th), thm(th);
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double h = h0 * std::max(1.0, std::fabs(th(j)));
      thp(j) = th(j) + h;
      thm(j) = th(j) - h;
      gradient(thp, gp);
      gradient(thm, gm);
      hess.col(j) = (gp - gm) / (2.0 * h);
      thp(j) = th(j);
      thm(j) = th(j);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
  };

  for (; iter < 200; ++iter) {
    gradient(theta, grad);
    if (grad.cwiseAbs().maxCoeff() < 1e-9) {
      converged = true;
      break;
    }
    fd_hessian(theta);
    Eigen::VectorXd step = (-hess).ldlt().solve(grad);
    if (!step.allFinite()) step = grad;  // fall back to steepest ascent
    double scale = 1.0;
    Eigen::VectorXd theta_new = theta + step;
    double ll_new = loglik(theta_new);
    for (int h = 0; h < 40 && !(ll_new > ll - 1e-14); ++h) {
      scale *= 0.5;
      theta_new = theta + scale * step;
      ll_new = loglik(theta_new);
    }
    const double change = (theta_new - theta).cwiseAbs().maxCoeff();
    theta = theta_new;
    ll = ll_new;
    if (change < 1e-10) {
      converged = true;
      ++iter;
      break;
    }
  }

  FittedModel fm;
  fm.family = Family::TruncatedNormal;
  fm.link = Link::Identity;
  fm.coef = theta.head(p).transpose();
  fm.coef_names = design.column_names;
  fm.n_obs = static_cast<std::size_t>(n);
  fm.resp_min = y.minCoeff();
  fm.resp_max = y.maxCoeff();
  const double s = std::exp(theta(p));
  fm.residual_mse = s * s;
  fm.truncation = Truncation{point, direction};
  fm.diag.converged = converged;
  fm.diag.iterations = iter;
  fm.diag.log_likelihood = ll;
  fm.diag.rmse = raw_rmse(y, X * theta.head(p));
  fd_hessian(theta);
  const Eigen::MatrixXd info_inv = (-hess).ldlt().solve(Eigen::MatrixXd::Identity(dim, dim));
  fm.stderrs = info_inv.diagonal().head(p).cwiseMax(0.0).cwiseSqrt().transpose();
  return fm;
}

}  // namespace gformula
