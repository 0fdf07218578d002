// Deliberately naive reference computations for tests: plain density sums,
// dense trapezoid sums, central differences and straightforward simulation.
// Nothing here shares code paths with the library beyond GaussMix storage.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "epi/gauss_mix.hpp"

namespace oracle {

inline double normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

inline double pdf(const epi::GaussMix& gm, double x) {
  double s = 0.0;
  for (std::size_t i = 0; i < gm.size(); ++i)
    s += gm.weights()[i] * normal_pdf(x, gm.means()[i], gm.variances()[i]);
  return s;
}

/// Dense composite trapezoid on [a, b] with n intervals.
inline double trapezoid(const std::function<double(double)>& f, double a, double b, int n = 200000) {
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

/// Fourth-order central difference.
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-3) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

/// E[X | sqrt(g) X + Z = y] by trapezoid over x.
inline double posterior_mean(const epi::GaussMix& gm, double gamma, double y) {
  const double sg = std::sqrt(gamma);
  auto lik = [&](double x) { return oracle::pdf(gm, x) * std::exp(-0.5 * (y - sg * x) * (y - sg * x)); };
  const double num = trapezoid([&](double x) { return x * lik(x); }, -30.0, 30.0, 60000);
  const double den = trapezoid(lik, -30.0, 30.0, 60000);
  return num / den;
}

/// Output density of the channel by trapezoid over x.
inline double output_pdf(const epi::GaussMix& gm, double gamma, double y) {
  const double sg = std::sqrt(gamma);
  return trapezoid([&](double x) { return oracle::pdf(gm, x) * normal_pdf(y, sg * x, 1.0); }, -30.0, 30.0,
                   60000);
}

inline double entropy(const epi::GaussMix& gm) {
  return trapezoid(
      [&](double x) {
        const double p = oracle::pdf(gm, x);
        return p > 0.0 ? -p * std::log(p) : 0.0;
      },
      -40.0, 40.0);
}

struct Mc {
  double mean;
  double std_error;
};

inline Mc summarize(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

/// One draw from the mixture.
inline double draw(const epi::GaussMix& gm, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> pick(gm.weights().begin(), gm.weights().end());
  const std::size_t k = pick(rng);
  std::normal_distribution<double> z(gm.means()[k], gm.sds()[k]);
  return z(rng);
}

/// Closed-form posterior mean written out component by component, with
/// responsibilities computed from raw densities.
inline double posterior_mean_closed(const epi::GaussMix& gm, double gamma, double y) {
  const double sg = std::sqrt(gamma);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < gm.size(); ++i) {
    const double mu = gm.means()[i], v = gm.variances()[i];
    const double r = gm.weights()[i] * normal_pdf(y, sg * mu, 1.0 + gamma * v);
    num += r * (mu + sg * v * (y - sg * mu) / (gamma * v + 1.0));
    den += r;
  }
  return num / den;
}

}  // namespace oracle
