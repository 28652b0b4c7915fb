#pragma once

// Ready-made conditional models. Each builder returns a fully declared
// ConditionalModel; the scenario catalog and the tests share them.

#include "collapse/model.hpp"

namespace collapse::models {

/// Y | x,w ~ U(0, x^2 + (w-x)^2), W | x ~ N(x, 1).
ConditionalModel uniform_normal();

/// Y | x,w ~ U(x-w, x+w), W | x ~ Gamma(rate 1, shape 1+x), so W > 0.
/// Defined for x > -1.
ConditionalModel homogeneous_uniform();

/// W | x ~ Gamma(rate x, shape 1), Y | x,w ~ Gamma(rate w, shape w*x).
/// E(Y|x,w) = x. Defined for x > 0.
ConditionalModel homogeneous_gamma();

/// f(y|x,w) = x y^(x-1) c on 0 < y < c^(-1/x), c = x^2 + (w-x)^2, with
/// W | x ~ N(x - lambda, 1). lambda = 0 is the untempered model.
ConditionalModel power_density(double lambda = 0.0);

/// lambda(x) = exp(alpha + beta*x).
double log_linear_rate(double alpha, double beta, double x);

/// Y | x,w ~ Poisson(lambda(x) w), W | x ~ Gamma(rate x, shape x). x > 0.
ConditionalModel poisson_gamma(double alpha = 0.1, double beta = 0.3);

/// Y | x,w ~ Poisson(lambda(x) w), W ~ Gamma(rate theta, shape theta)
/// independent of X.
ConditionalModel nb_regression(double theta = 2.0, double alpha = 0.1, double beta = 0.3);

/// Y | x,w ~ N(x w, 1), W | x ~ N(x, 1).
ConditionalModel product_mean();

/// Y | x,w ~ N(x - w, 1), W | x ~ N(2x, 1).
ConditionalModel cochran_reversal();

/// Joint density phi(y) phi(x-y) phi(w-y), conditioned numerically.
ConditionalModel xwy_chain();

/// Y | x,w ~ Poisson(exp(alpha + beta x + gamma w)), W | x ~ N(x, 1).
ConditionalModel poisson_loglinear(double alpha, double beta, double gamma);

/// Y | x,w ~ Bernoulli(expit(alpha + beta x + gamma w)), W | x ~ N(x, 1).
ConditionalModel logistic(double alpha, double beta, double gamma);

/// Y | x,w ~ N(alpha + beta x + gamma w, sigma^2), W | x ~ N(x, 1).
ConditionalModel linear_gaussian(double alpha, double beta, double gamma, double sigma = 1.0);

}  // namespace collapse::models
