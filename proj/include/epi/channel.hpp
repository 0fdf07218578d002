// The scalar additive Gaussian noise channel Y = sqrt(gamma) X + Z with
// Z ~ N(0, 1) and X a Gaussian mixture: output law, closed-form posterior,
// MMSE, output score along two routes, output Fisher information, the
// suboptimal-estimator decomposition, and entropy through the SNR integral.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "epi/gauss_mix.hpp"
#include "epi/quadrature.hpp"

namespace epi {

inline constexpr double kTwoPiE = 2.0 * std::numbers::pi * std::numbers::e;

/// Everything the posterior needs at one output value, from a single pass
/// over the components.
struct PosteriorPoint {
  double log_density = 0.0;  ///< log f_Y(y)
  double mean = 0.0;         ///< E[X | Y = y]
  double variance = 0.0;     ///< Var(X | Y = y), as within + between parts
  double score = 0.0;        ///< d/dy log f_Y(y) from the output mixture
};

class ChannelView {
 public:
  ChannelView(GaussMix input, double gamma)
      : input_(std::move(input)), gamma_(gamma), output_(make_output(input_, gamma)) {
    const std::size_t k = input_.size();
    sqrt_gamma_ = std::sqrt(gamma_);
    gain_.resize(k);
    post_var_.resize(k);
    log_norm_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double v = input_.variances()[i];
      const double s = gamma_ * v + 1.0;
      gain_[i] = sqrt_gamma_ * v / s;
      post_var_[i] = v / s;
      log_norm_[i] = input_.log_weights()[i] - 0.5 * std::log(s) - kLogSqrt2Pi;
    }
  }

  const GaussMix& input() const noexcept { return input_; }
  double gamma() const noexcept { return gamma_; }
  /// Law of Y: means sqrt(gamma) mu_k, variances gamma var_k + 1.
  const GaussMix& output() const noexcept { return output_; }

  PosteriorPoint evaluate(double y) const {
    const std::size_t k = input_.size();
    const auto mu = input_.means();
    const auto out_mu = output_.means();
    const auto out_var = output_.variances();
    if (k == 1) {
      const double d = y - out_mu[0];
      PosteriorPoint p;
      p.log_density = log_norm_[0] - 0.5 * d * d / out_var[0];
      p.mean = mu[0] + gain_[0] * d;
      p.variance = post_var_[0];
      p.score = -d / out_var[0];
      return p;
    }
    detail::Scratch t(k);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const double d = y - out_mu[i];
      t[i] = log_norm_[i] - 0.5 * d * d / out_var[i];
      top = std::max(top, t[i]);
    }
    double norm = 0.0;
    double mean = 0.0;
    double within = 0.0;
    double sc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = y - out_mu[i];
      const double r = std::exp(t[i] - top);
      t[i] = r;
      norm += r;
      mean += r * (mu[i] + gain_[i] * d);
      within += r * post_var_[i];
      sc += r * (-d / out_var[i]);
    }
    mean /= norm;
    double between = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double dm = mu[i] + gain_[i] * (y - out_mu[i]) - mean;
      between += t[i] * dm * dm;
    }
    PosteriorPoint p;
    p.log_density = top + std::log(norm);
    p.mean = mean;
    p.variance = (within + between) / norm;
    p.score = sc / norm;
    return p;
  }

  /// E[X | Y = y] alone.
  double mean(double y) const {
    const std::size_t k = input_.size();
    const auto mu = input_.means();
    const auto out_mu = output_.means();
    const auto out_var = output_.variances();
    if (k == 1) return mu[0] + gain_[0] * (y - out_mu[0]);
    detail::Scratch t(k);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const double d = y - out_mu[i];
      t[i] = log_norm_[i] - 0.5 * d * d / out_var[i];
      top = std::max(top, t[i]);
    }
    double norm = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double r = std::exp(t[i] - top);
      norm += r;
      acc += r * (mu[i] + gain_[i] * (y - out_mu[i]));
    }
    return acc / norm;
  }

  /// sum_k w_k Var(X | Y, component k): the part of the MMSE that needs no
  /// integration.
  double within_mmse() const {
    double s = 0.0;
    for (std::size_t i = 0; i < input_.size(); ++i) s += input_.weights()[i] * post_var_[i];
    return s;
  }

  /// Spread of the per-component posterior means around the posterior mean.
  double between_variance(double y) const {
    const std::size_t k = input_.size();
    if (k == 1) return 0.0;
    const auto mu = input_.means();
    const auto out_mu = output_.means();
    const auto out_var = output_.variances();
    detail::Scratch t(k);
    detail::Scratch m(k);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i) {
      const double d = y - out_mu[i];
      t[i] = log_norm_[i] - 0.5 * d * d / out_var[i];
      m[i] = mu[i] + gain_[i] * d;
      top = std::max(top, t[i]);
    }
    double norm = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      t[i] = std::exp(t[i] - top);
      norm += t[i];
      mean += t[i] * m[i];
    }
    mean /= norm;
    double between = 0.0;
    for (std::size_t i = 0; i < k; ++i) between += t[i] * (m[i] - mean) * (m[i] - mean);
    return between / norm;
  }

 private:
  static GaussMix make_output(const GaussMix& in, double gamma) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw std::invalid_argument("ChannelView: gamma must be finite and >= 0");
    const double sg = std::sqrt(gamma);
    std::vector<double> mu(in.means().begin(), in.means().end());
    std::vector<double> var(in.variances().begin(), in.variances().end());
    for (auto& m : mu) m *= sg;
    for (auto& v : var) v = gamma * v + 1.0;
    return {std::vector<double>(in.weights().begin(), in.weights().end()), std::move(mu),
            std::move(var)};
  }

  GaussMix input_;
  double gamma_;
  GaussMix output_;
  double sqrt_gamma_ = 0.0;
  std::vector<double> gain_;      // sqrt(g) var_k / (g var_k + 1)
  std::vector<double> post_var_;  // var_k / (g var_k + 1)
  std::vector<double> log_norm_;  // log w_k - log sd_out_k - log sqrt(2 pi)
};

inline const GaussMix& output_dist(const ChannelView& ch) { return ch.output(); }

inline double posterior_mean(const ChannelView& ch, double y) { return ch.mean(y); }

enum class ScorePath { analytic, posterior };

/// Score of the output density. `analytic` differentiates the output
/// mixture; `posterior` uses sqrt(gamma) E[X|Y=y] - y.
inline double output_score(const ChannelView& ch, double y, ScorePath path) {
  if (path == ScorePath::analytic) return ch.evaluate(y).score;
  return std::sqrt(ch.gamma()) * ch.mean(y) - y;
}

/// Expectation of g(y) under the channel output.
template <class G>
Estimate expect_output(const ChannelView& ch, G&& g, const Settings& s, double tol,
                       const char* what) {
  const Window w = window(ch.output());
  const QuadResult r = integrate_line(
      [&](double y) {
        const PosteriorPoint p = ch.evaluate(y);
        return g(y, p) * std::exp(p.log_density);
      },
      line_rule(s, w, tol), w.center, w.half_width);
  if (!r.converged) throw ConvergenceError(what, r);
  return {r.value, r.est_error};
}

/// E[(X - E[X|Y])^2] = E[Var(X|Y)]. The within-component part is closed
/// form; the between-component part is integrated over the output law.
inline Estimate mmse(const ChannelView& ch, const Settings& s = {}, double tol = 0.0) {
  const double within = ch.within_mmse();
  if (ch.input().size() == 1) return {within, 0.0};
  const Estimate between = expect_output(
      ch, [&](double y, const PosteriorPoint&) { return ch.between_variance(y); }, s,
      tol > 0.0 ? tol : s.tol1d, "mmse");
  return {within + between.value, between.est_error};
}

/// J(Y) = E[score(Y)^2], always by integrating the analytic output score.
inline Estimate fisher_output(const ChannelView& ch, const Settings& s = {}) {
  // Pure noise: the output is exactly N(0, 1).
  if (ch.gamma() == 0.0) return {1.0, 0.0};
  return expect_output(
      ch, [](double, const PosteriorPoint& p) { return p.score * p.score; }, s, s.tol1d,
      "fisher_output");
}

struct MmseCurve {
  std::vector<double> gammas;
  std::vector<double> values;
  std::vector<double> est_errors;
};

inline MmseCurve mmse_curve(const GaussMix& gm, const std::vector<double>& gammas,
                            const Settings& s = {}) {
  MmseCurve c;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (!(gammas[i] >= 0.0)) throw std::invalid_argument("mmse_curve: gamma must be >= 0");
    if (i > 0 && !(gammas[i] > gammas[i - 1]))
      throw std::invalid_argument("mmse_curve: gammas must be increasing");
  }
  c.gammas = gammas;
  c.values.resize(gammas.size());
  c.est_errors.resize(gammas.size());
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    const Estimate e = mmse(ChannelView(gm, gammas[i]), s);
    c.values[i] = e.value;
    c.est_errors[i] = e.est_error;
  }
  return c;
}

struct PenaltyReport {
  Estimate mmse;     ///< E[(X - E[X|Y])^2]
  Estimate mse;      ///< E[(X - f(Y))^2], integrated over the joint law of (X, Z)
  Estimate penalty;  ///< E[(f(Y) - E[X|Y])^2]
};

/// Cost of replacing the conditional mean by an arbitrary estimator f.
/// Rejects estimators with E[f(Y)^2] not finite.
inline PenaltyReport suboptimal_penalty(const ChannelView& ch, const std::function<double(double)>& f,
                                        const Settings& s = {}) {
  try {
    expect_output(
        ch,
        [&](double y, const PosteriorPoint&) {
          const double v = f(y);
          return v * v;
        },
        s, s.tol1d, "suboptimal_penalty: E[f(Y)^2]");
  } catch (const NonFiniteError&) {
    throw std::domain_error("suboptimal_penalty: E[f(Y)^2] is not finite");
  } catch (const ConvergenceError&) {
    throw std::domain_error("suboptimal_penalty: E[f(Y)^2] does not converge");
  }

  PenaltyReport rep;
  rep.mmse = mmse(ch, s);
  rep.penalty = expect_output(
      ch,
      [&](double y, const PosteriorPoint& p) {
        const double d = f(y) - p.mean;
        return d * d;
      },
      s, s.tol1d, "suboptimal_penalty: penalty");

  // E[(X - f(sqrt(g) X + Z))^2] over the product law of (X, Z).
  const GaussMix& in = ch.input();
  const Window wx = window(in);
  const double sg = std::sqrt(ch.gamma());
  QuadRule rule = QuadRule::composite(s.tol2d, s.max_levels,
                                      start_panels(2.0 * wx.half_width, wx.scale, 5.0));
  rule.panels = std::max(rule.panels, start_panels(20.0, 1.0, 5.0));
  const QuadResult r = integrate_plane(
      [&](double x, double z) {
        const double e = x - f(sg * x + z);
        return e * e * pdf(in, x) * std::exp(-0.5 * z * z - kLogSqrt2Pi);
      },
      rule, {wx.center, 0.0}, {wx.half_width, 10.0});
  if (!r.converged) throw ConvergenceError("suboptimal_penalty: mse", r);
  rep.mse = {r.value, r.est_error};
  return rep;
}

/// The integrand of the SNR representation of entropy,
/// mmse(gamma) - 1 / (2 pi e + gamma), with the closed-form part combined
/// algebraically so nothing cancels at large gamma. `tol` applies to the
/// integrated (between-component) part.
inline Estimate entropy_integrand(const GaussMix& gm, double gamma, const Settings& s, double tol) {
  double closed = 0.0;
  for (std::size_t i = 0; i < gm.size(); ++i) {
    const double v = gm.variances()[i];
    closed += gm.weights()[i] * (kTwoPiE * v - 1.0) / ((1.0 + gamma * v) * (kTwoPiE + gamma));
  }
  if (gm.size() == 1) return {closed, 0.0};
  const ChannelView ch(gm, gamma);
  const Estimate between = expect_output(
      ch, [&](double y, const PosteriorPoint&) { return ch.between_variance(y); }, s, tol,
      "entropy_integrand");
  return {closed + between.value, between.est_error};
}

/// Inner tolerance for an integrand that the SNR substitution multiplies by
/// (1 + gamma)^2, so the transformed integrand keeps absolute accuracy `tol`.
inline double inner_tol(double tol, double gamma) {
  const double j = 1.0 + gamma;
  return std::max(tol / (j * j), 1e-300);
}

inline QuadRule gamma_rule(const Settings& s, double tol) {
  QuadRule r = QuadRule::composite(tol, s.max_levels, 2);
  r.transform = DomainTransform::rational;
  r.threads = s.threads;
  return r;
}

/// h(X) = 1/2 int_0^inf [mmse(gamma) - 1/(2 pi e + gamma)] dgamma.
inline Estimate entropy_immse(const GaussMix& gm, const Settings& s = {}) {
  Settings inner = s;
  inner.threads = 1;
  const QuadResult r = integrate_gamma(
      [&](double g) { return entropy_integrand(gm, g, inner, inner_tol(s.tol1d, g)).value; },
      gamma_rule(s, s.tol1d));
  if (!r.converged) throw ConvergenceError("entropy_immse", r);
  return {0.5 * r.value, 0.5 * r.est_error};
}

}  // namespace epi
