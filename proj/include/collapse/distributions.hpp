#pragma once

// Closed-form densities, distribution functions and seeded samplers for the
// families used by the models.
//
// Parameter conventions:
//   normal(mean, sd)
//   uniform(lo, hi)
//   gamma(rate, shape)              mean shape/rate
//   poisson(mean)
//   negative_binomial(size r, prob q)  pmf G(y+r)/(y! G(r)) q^r (1-q)^y
//   bernoulli(p)
//   tempered_normal(center, lambda) density phi(w - center + lambda)

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "collapse/numerics.hpp"

namespace collapse {

enum class FamilyTag { Normal, Uniform, Gamma, Poisson, NegativeBinomial, Bernoulli, TemperedNormal };

std::string_view to_string(FamilyTag tag);

/// Parses the lowercase config spelling ("normal", "gamma", "negative-binomial", ...).
FamilyTag family_from_string(std::string_view name);

/// Number of parameters the family takes.
std::size_t arity(FamilyTag tag);

using Rng = std::mt19937_64;

struct Seed {
  std::uint64_t value = 0;
};

struct Family {
  FamilyTag tag = FamilyTag::Normal;
  std::vector<double> params;

  static Family normal(double mean, double sd) { return {FamilyTag::Normal, {mean, sd}}; }
  static Family uniform(double lo, double hi) { return {FamilyTag::Uniform, {lo, hi}}; }
  static Family gamma(double rate, double shape) { return {FamilyTag::Gamma, {rate, shape}}; }
  static Family poisson(double mean) { return {FamilyTag::Poisson, {mean}}; }
  static Family negative_binomial(double size, double prob) {
    return {FamilyTag::NegativeBinomial, {size, prob}};
  }
  static Family bernoulli(double p) { return {FamilyTag::Bernoulli, {p}}; }
  static Family tempered_normal(double center, double lambda) {
    return {FamilyTag::TemperedNormal, {center, lambda}};
  }

  /// Throws Error(InvalidParams) on wrong arity or out-of-range parameters.
  void validate() const;

  bool is_discrete() const;
  Interval support() const;
  double mean() const;
  double variance() const;
};

/// Density for continuous families, probability mass for discrete ones.
/// Points outside the support return 0.
double pdf_or_pmf(const Family& family, double point);

/// log of pdf_or_pmf; -inf outside the support.
double log_pdf_or_pmf(const Family& family, double point);

/// Right-continuous distribution function.
double cdf(const Family& family, double point);

/// One draw using an existing generator.
double draw(const Family& family, Rng& rng);

/// n draws from a generator seeded with `seed`. Identical seeds give
/// bit-identical sequences within one build.
std::vector<double> sample(const Family& family, std::size_t n, Seed seed);

}  // namespace collapse
