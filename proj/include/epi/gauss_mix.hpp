// Finite scalar Gaussian mixtures: densities, scores, moments, and the
// closure operations (scaling, independent sums, the sqrt(1-a)/sqrt(a)
// combination) that keep everything inside the family.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "epi/quadrature.hpp"

namespace epi {

inline constexpr double kMinVariance = 1e-8;
inline constexpr double kWeightSumTol = 1e-12;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // ln sqrt(2 pi)

/// Quadrature settings shared by every module. The defaults are the
/// production tolerances; `threads` only changes how node values are
/// evaluated, never the result.
struct Settings {
  double tol1d = 1e-9;
  double tol2d = 1e-7;
  int max_levels = 12;
  unsigned threads = 1;
};

/// Immutable finite mixture sum_k w_k N(mu_k, var_k).
class GaussMix {
 public:
  GaussMix(std::vector<double> weights, std::vector<double> means, std::vector<double> variances)
      : weights_(std::move(weights)), means_(std::move(means)), variances_(std::move(variances)) {
    const std::size_t k = weights_.size();
    if (k == 0) throw std::invalid_argument("GaussMix: needs at least one component");
    if (means_.size() != k || variances_.size() != k)
      throw std::invalid_argument("GaussMix: weights, means and variances differ in length");
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!(weights_[i] > 0.0) || !std::isfinite(weights_[i]))
        throw std::invalid_argument("GaussMix: weights must be positive and finite");
      if (!std::isfinite(means_[i])) throw std::invalid_argument("GaussMix: means must be finite");
      if (!(variances_[i] >= kMinVariance) || !std::isfinite(variances_[i]))
        throw std::invalid_argument("GaussMix: variances must be finite and >= 1e-8");
      total += weights_[i];
    }
    if (std::abs(total - 1.0) > kWeightSumTol)
      throw std::invalid_argument("GaussMix: weights must sum to 1");
    log_weights_.resize(k);
    sds_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      log_weights_[i] = std::log(weights_[i]);
      sds_[i] = std::sqrt(variances_[i]);
    }
  }

  static GaussMix gaussian(double mean, double variance) { return {{1.0}, {mean}, {variance}}; }

  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const double> means() const noexcept { return means_; }
  std::span<const double> variances() const noexcept { return variances_; }
  std::span<const double> log_weights() const noexcept { return log_weights_; }
  std::span<const double> sds() const noexcept { return sds_; }

  bool is_gaussian() const noexcept { return size() == 1; }

 private:
  std::vector<double> weights_;
  std::vector<double> means_;
  std::vector<double> variances_;
  std::vector<double> log_weights_;
  std::vector<double> sds_;
};

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

struct Sample {
  double value = 0.0;
  std::size_t component = 0;
};

namespace detail {

/// Small-buffer scratch space for per-component terms.
class Scratch {
 public:
  explicit Scratch(std::size_t n) {
    if (n > kInline) heap_.resize(n);
    data_ = n > kInline ? heap_.data() : inline_;
  }
  double& operator[](std::size_t i) { return data_[i]; }

 private:
  static constexpr std::size_t kInline = 64;
  double inline_[kInline];
  std::vector<double> heap_;
  double* data_;
};

}  // namespace detail

/// log of the density, evaluated with a max shift over components.
inline double log_pdf(const GaussMix& gm, double x) {
  const std::size_t k = gm.size();
  detail::Scratch t(k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    const double z = (x - gm.means()[i]) / gm.sds()[i];
    t[i] = gm.log_weights()[i] - 0.5 * z * z - std::log(gm.sds()[i]) - kLogSqrt2Pi;
    top = std::max(top, t[i]);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::exp(t[i] - top);
  return top + std::log(s);
}

inline double pdf(const GaussMix& gm, double x) { return std::exp(log_pdf(gm, x)); }

/// d/dx log pdf: the responsibility-weighted component scores.
inline double score(const GaussMix& gm, double x) {
  const std::size_t k = gm.size();
  if (k == 1) return -(x - gm.means()[0]) / gm.variances()[0];
  detail::Scratch t(k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    const double z = (x - gm.means()[i]) / gm.sds()[i];
    t[i] = gm.log_weights()[i] - 0.5 * z * z - std::log(gm.sds()[i]);
    top = std::max(top, t[i]);
  }
  double norm = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double r = std::exp(t[i] - top);
    norm += r;
    acc += r * (-(x - gm.means()[i]) / gm.variances()[i]);
  }
  return acc / norm;
}

inline Moments moments(const GaussMix& gm) {
  Moments m;
  for (std::size_t i = 0; i < gm.size(); ++i) m.mean += gm.weights()[i] * gm.means()[i];
  for (std::size_t i = 0; i < gm.size(); ++i) {
    const double d = gm.means()[i] - m.mean;
    m.variance += gm.weights()[i] * (gm.variances()[i] + d * d);
  }
  return m;
}

/// Law of c * X.
inline GaussMix scaled(const GaussMix& gm, double c) {
  if (!(c != 0.0) || !std::isfinite(c)) throw std::invalid_argument("scaled: factor must be non-zero");
  std::vector<double> mu(gm.means().begin(), gm.means().end());
  std::vector<double> var(gm.variances().begin(), gm.variances().end());
  for (auto& m : mu) m *= c;
  for (auto& v : var) v *= c * c;
  return {std::vector<double>(gm.weights().begin(), gm.weights().end()), std::move(mu),
          std::move(var)};
}

/// Law of A + B for independent A, B: the K_a * K_b product mixture,
/// ordered with the component of `a` as the outer index.
inline GaussMix convolve(const GaussMix& a, const GaussMix& b) {
  std::vector<double> w, mu, var;
  const std::size_t n = a.size() * b.size();
  w.reserve(n);
  mu.reserve(n);
  var.reserve(n);
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      w.push_back(a.weights()[i] * b.weights()[j]);
      total += w.back();
      mu.push_back(a.means()[i] + b.means()[j]);
      var.push_back(a.variances()[i] + b.variances()[j]);
    }
  // Products of normalized weights can drift by a few ulps.
  for (auto& x : w) x /= total;
  return {std::move(w), std::move(mu), std::move(var)};
}

/// Law of sqrt(1 - alpha) A + sqrt(alpha) B. At alpha = 0 or 1 this is the
/// corresponding input itself.
inline GaussMix lieb_combine(const GaussMix& a, const GaussMix& b, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("lieb_combine: alpha must be in [0,1]");
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  return convolve(scaled(a, std::sqrt(1.0 - alpha)), scaled(b, std::sqrt(alpha)));
}

/// Draw n samples; the stream depends only on `seed`.
inline std::vector<Sample> sample(const GaussMix& gm, std::uint64_t seed, std::size_t n) {
  if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> cdf(gm.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < gm.size(); ++i) cdf[i] = (acc += gm.weights()[i]);
  std::vector<Sample> out(n);
  for (auto& s : out) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * acc;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    s.component = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), gm.size() - 1);
    s.value = gm.means()[s.component] + gm.sds()[s.component] * normal(rng);
  }
  return out;
}

/// Integration window for expectations under a mixture: every component is
/// covered to 10 of its own standard deviations. `scale` is the narrowest
/// component's standard deviation and sets the starting panel width.
struct Window {
  double center = 0.0;
  double half_width = 1.0;
  double scale = 1.0;
};

inline Window window(const GaussMix& gm, double extra_sds = 0.0) {
  const Moments m = moments(gm);
  double offset = 0.0;
  double max_sd = 0.0;
  double min_sd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < gm.size(); ++i) {
    offset = std::max(offset, std::abs(gm.means()[i] - m.mean));
    max_sd = std::max(max_sd, gm.sds()[i]);
    min_sd = std::min(min_sd, gm.sds()[i]);
  }
  return {m.mean, (10.0 + extra_sds) * max_sd + offset, min_sd};
}

/// Starting panel count so no panel is wider than `sds_per_panel` of the
/// narrowest feature.
inline int start_panels(double width, double scale, double sds_per_panel) {
  const double p = std::ceil(width / (sds_per_panel * scale));
  return static_cast<int>(std::clamp(p, 2.0, 512.0));
}

inline QuadRule line_rule(const Settings& s, const Window& w, double tol) {
  QuadRule r = QuadRule::composite(tol, s.max_levels, start_panels(2.0 * w.half_width, w.scale, 5.0));
  return r;
}

inline QuadRule line_rule(const Settings& s, const Window& w) { return line_rule(s, w, s.tol1d); }

/// Integrate g(x) pdf(x) over the mixture window; throws on non-convergence.
template <class G>
Estimate expect(const GaussMix& gm, G&& g, const Settings& s, const char* what,
                unsigned threads = 1) {
  const Window w = window(gm);
  QuadRule rule = line_rule(s, w);
  rule.threads = threads;
  const QuadResult r = integrate_line([&](double x) { return g(x) * pdf(gm, x); }, rule, w.center,
                                      w.half_width);
  if (!r.converged) throw ConvergenceError(what, r);
  return {r.value, r.est_error};
}

/// Fisher information int score(x)^2 pdf(x) dx.
inline Estimate fisher_direct(const GaussMix& gm, const Settings& s = {}) {
  return expect(
      gm,
      [&](double x) {
        const double sc = score(gm, x);
        return sc * sc;
      },
      s, "fisher_direct");
}

/// Differential entropy in nats.
inline Estimate entropy_direct(const GaussMix& gm, const Settings& s = {}) {
  const Window w = window(gm);
  const QuadResult r = integrate_line(
      [&](double x) {
        const double lp = log_pdf(gm, x);
        return -lp * std::exp(lp);
      },
      line_rule(s, w), w.center, w.half_width);
  if (!r.converged) throw ConvergenceError("entropy_direct", r);
  return {r.value, r.est_error};
}

inline double gaussian_entropy(double variance) {
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

}  // namespace epi
