#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gformula/formula.hpp"

namespace gformula {

enum class Family { Binomial, Gaussian, Multinomial, TruncatedNormal };
enum class Link { Logit, Probit, Identity, Log };

enum class TruncationDirection { Left, Right };
struct Truncation {
  double point;  // -inf / +inf sentinels mean untruncated
  TruncationDirection direction;
};

struct ModelDiagnostics {
  bool converged = true;
  int iterations = 0;
  double log_likelihood = 0.0;
  double rmse = 0.0;  // sqrt(mean squared raw residual) over fitting records
};

// Coefficients and everything needed to reuse a fit for prediction and
// simulation: the estimation-step-1 output.
struct FittedModel {
  Family family;
  Link link = Link::Identity;
  // One row for binomial/gaussian/truncated-normal; one row per non-reference
  // level for multinomial.
  Eigen::MatrixXd coef;
  Eigen::MatrixXd stderrs;
  double residual_mse = std::numeric_limits<double>::quiet_NaN();  // gaussian / truncated-normal
  std::optional<Truncation> truncation;
  double resp_min = 0.0, resp_max = 0.0;  // observed response range
  std::size_t n_obs = 0;
  std::vector<std::string> coef_names;
  std::vector<std::string> response_levels;  // multinomial
  ModelDiagnostics diag;

  std::size_t width() const { return static_cast<std::size_t>(coef.cols()); }

  // Linear predictor through the inverse link (probability for binomial).
  double predict_mean(std::span<const double> row) const;
  // Full probability vector over response levels (multinomial).
  void predict_probs(std::span<const double> row, std::vector<double>& out) const;

  double linear_predictor(const double* row) const;
};

double link_inverse(Link link, double eta);

// Bernoulli maximum likelihood via IRLS; convergence when max |coef change|
// < 1e-8 or relative deviance change < 1e-10, at most 100 iterations.
// Separation is surfaced as diag.converged == false, never an abort.
FittedModel fit_binomial(const DesignMatrix& design, Link link);

// Identity link solves least squares directly; log link runs IRLS.
// residual_mse uses the n - p denominator.
FittedModel fit_gaussian(const DesignMatrix& design, Link link);

// Multinomial logistic regression by Newton iterations on the joint
// log-likelihood; the first level of `levels` is the reference.
FittedModel fit_multinomial(const DesignMatrix& design, const Levels& levels);

// Truncated-normal maximum likelihood over (beta, log sigma) by Newton
// iterations with backtracking line search.  residual_mse holds the MLE
// sigma-hat squared.
FittedModel fit_truncated_normal(const DesignMatrix& design, double point,
                                 TruncationDirection direction);

double log_norm_cdf(double x);

}  // namespace gformula
