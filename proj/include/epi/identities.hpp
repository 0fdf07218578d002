// Executable forms of the entropy-power / Lieb inequality results for
// scalar Gaussian mixtures: the exact deficit as an SNR integral of a
// conditional-mean mismatch, the per-SNR equality conditions, the score
// convolution identity, the Fisher information inequality, and the
// mismatched-estimation and relative-Fisher representations of relative
// entropy.
//
// Notation used throughout: for an instance (X1, X2, a) and SNR g,
//   Y1 = sqrt(g) X1 + Z1, Y2 = sqrt(g) X2 + Z2, W = sqrt(1-a) Y1 + sqrt(a) Y2,
//   X  = sqrt(1-a) X1 + sqrt(a) X2, so W = sqrt(g) X + (standard normal).
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epi/channel.hpp"
#include "epi/gauss_mix.hpp"
#include "epi/quadrature.hpp"

namespace epi {

/// Residuals at or below this count as "vanishing" for the equality verdict.
inline constexpr double kEqualityThreshold = 1e-6;

struct LiebInstance {
  GaussMix x1;
  GaussMix x2;
  double alpha;

  LiebInstance(GaussMix a, GaussMix b, double alpha_)
      : x1(std::move(a)), x2(std::move(b)), alpha(alpha_) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("LiebInstance: alpha must be in [0,1]");
  }

  bool degenerate() const noexcept { return alpha == 0.0 || alpha == 1.0; }
  GaussMix combined() const { return lieb_combine(x1, x2, alpha); }
};

namespace detail {

/// The three channels of one instance at one SNR.
struct PairChannels {
  PairChannels(const LiebInstance& inst, double gamma)
      : ch1(inst.x1, gamma),
        ch2(inst.x2, gamma),
        chw(inst.combined(), gamma),
        c(std::sqrt(1.0 - inst.alpha)),
        s(std::sqrt(inst.alpha)) {}

  ChannelView ch1;
  ChannelView ch2;
  ChannelView chw;
  double c;  // sqrt(1 - alpha)
  double s;  // sqrt(alpha)
};

/// Plane integrand f(p1, p2, y1, y2) weighted by the product density of
/// (Y1, Y2). Posterior data along y2 is computed once per level.
template <class F>
struct PairIntegrand {
  const PairChannels* pc;
  F f;

  auto bind(std::span<const double> xs, std::span<const double> ys) const {
    std::vector<PosteriorPoint> col(ys.size());
    for (std::size_t j = 0; j < ys.size(); ++j) col[j] = pc->ch2.evaluate(ys[j]);
    return [this, xs, ys, col = std::move(col)](std::size_t i, std::span<double> out) {
      const PosteriorPoint p1 = pc->ch1.evaluate(xs[i]);
      for (std::size_t j = 0; j < ys.size(); ++j) {
        const double dens = std::exp(p1.log_density + col[j].log_density);
        out[j] = dens == 0.0 ? 0.0 : dens * f(p1, col[j], xs[i], ys[j]);
      }
    };
  }
};

template <class F>
Estimate expect_pair(const PairChannels& pc, F&& f, const Settings& s, double tol,
                     const char* what) {
  const Window w1 = window(pc.ch1.output());
  const Window w2 = window(pc.ch2.output());
  QuadRule rule = QuadRule::composite(tol, s.max_levels);
  rule.panels = std::max(start_panels(2.0 * w1.half_width, w1.scale, 8.0),
                         start_panels(2.0 * w2.half_width, w2.scale, 8.0));
  rule.threads = s.threads;
  const PairIntegrand<std::decay_t<F>> integrand{&pc, std::forward<F>(f)};
  const QuadResult r = integrate_plane(integrand, rule, {w1.center, w2.center},
                                       {w1.half_width, w2.half_width});
  if (!r.converged) throw ConvergenceError(what, r);
  return {r.value, r.est_error};
}

/// The line {(y1, y2) : c y1 + s y2 = w}, parametrized by the orthogonal
/// coordinate t = -s y1 + c y2 (unit Jacobian). Carries the integration
/// window for the conditional law of t given W = w.
class Fiber {
 public:
  Fiber(const PairChannels& pc, double w) : pc_(&pc), w_(w) {
    log_fw_ = pc.chw.evaluate(w).log_density;
    const GaussMix& o1 = pc.ch1.output();
    const GaussMix& o2 = pc.ch2.output();
    const double c = pc.c;
    const double s = pc.s;
    struct Comp {
      double log_weight, mean, sd;
    };
    std::vector<Comp> comps;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < o1.size(); ++i)
      for (std::size_t j = 0; j < o2.size(); ++j) {
        const double a = o1.means()[i];
        const double va = o1.variances()[i];
        const double b = o2.means()[j];
        const double vb = o2.variances()[j];
        const double vw = c * c * va + s * s * vb;
        const double mw = c * a + s * b;
        const double cov = c * s * (vb - va);
        const double lw = o1.log_weights()[i] + o2.log_weights()[j] - 0.5 * std::log(vw) -
                          0.5 * (w - mw) * (w - mw) / vw;
        comps.push_back({lw, -s * a + c * b + cov / vw * (w - mw), std::sqrt(va * vb / vw)});
        top = std::max(top, lw);
      }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    scale_ = std::numeric_limits<double>::infinity();
    for (const Comp& k : comps) {
      if (k.log_weight < top - 50.0) continue;
      lo = std::min(lo, k.mean - 10.0 * k.sd);
      hi = std::max(hi, k.mean + 10.0 * k.sd);
      scale_ = std::min(scale_, k.sd);
    }
    center_ = 0.5 * (lo + hi);
    half_ = 0.5 * (hi - lo);
  }

  /// E[g(p1, p2, y1, y2) | W = w].
  template <class G>
  Estimate expect(G&& g, const Settings& s, double tol, const char* what) const {
    const PairChannels& pc = *pc_;
    QuadRule rule = QuadRule::composite(tol, s.max_levels, start_panels(2.0 * half_, scale_, 5.0));
    const QuadResult r = integrate_line(
        [&](double t) {
          const double y1 = pc.c * w_ - pc.s * t;
          const double y2 = pc.s * w_ + pc.c * t;
          const PosteriorPoint p1 = pc.ch1.evaluate(y1);
          const PosteriorPoint p2 = pc.ch2.evaluate(y2);
          const double q = std::exp(p1.log_density + p2.log_density - log_fw_);
          return q == 0.0 ? 0.0 : q * g(p1, p2, y1, y2);
        },
        rule, center_, half_);
    if (!r.converged) throw ConvergenceError(what, r);
    return {r.value, r.est_error};
  }

 private:
  const PairChannels* pc_;
  double w_;
  double log_fw_ = 0.0;
  double center_ = 0.0;
  double half_ = 1.0;
  double scale_ = 1.0;
};

/// E_W[h(w, fiber)] where h receives the fiber at w and returns a
/// non-negative pointwise residual.
template <class H>
Estimate expect_over_w(const PairChannels& pc, H&& h, const Settings& s, const char* what) {
  const Window ww = window(pc.chw.output());
  QuadRule rule = line_rule(s, ww);
  rule.threads = s.threads;
  const QuadResult r = integrate_line(
      [&](double w) {
        const double lw = pc.chw.evaluate(w).log_density;
        if (lw < -700.0) return 0.0;
        return std::exp(lw) * h(w, Fiber(pc, w));
      },
      rule, ww.center, ww.half_width);
  if (!r.converged) throw ConvergenceError(what, r);
  return {r.value, r.est_error};
}

inline Settings serial(Settings s) {
  s.threads = 1;
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entropy-power and Lieb forms

/// e^{2h(V+W)} - e^{2h(V)} - e^{2h(W)} for independent V, W.
inline Estimate epi_gap(const GaussMix& v, const GaussMix& w, const Settings& s = {}) {
  const Estimate hv = entropy_direct(v, s);
  const Estimate hw = entropy_direct(w, s);
  const Estimate hs = entropy_direct(convolve(v, w), s);
  const double ev = std::exp(2.0 * hv.value);
  const double ew = std::exp(2.0 * hw.value);
  const double es = std::exp(2.0 * hs.value);
  return {es - ev - ew, 2.0 * (es * hs.est_error + ev * hv.est_error + ew * hw.est_error)};
}

/// Map (V, W) to the Lieb instance X1 = V / sqrt(1-a), X2 = W / sqrt(a) with
/// a = e^{2h(W)} / (e^{2h(V)} + e^{2h(W)}).
inline LiebInstance epi_to_lieb(const GaussMix& v, const GaussMix& w, const Settings& s = {}) {
  const double hv = entropy_direct(v, s).value;
  const double hw = entropy_direct(w, s).value;
  // a = 1 / (1 + e^{2(hv - hw)}), written to stay finite for large gaps.
  const double alpha = 1.0 / (1.0 + std::exp(2.0 * (hv - hw)));
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::domain_error("epi_to_lieb: entropies too far apart for a non-degenerate alpha");
  return {scaled(v, 1.0 / std::sqrt(1.0 - alpha)), scaled(w, 1.0 / std::sqrt(alpha)), alpha};
}

/// h(sqrt(1-a) X1 + sqrt(a) X2) - (1-a) h(X1) - a h(X2) by direct entropy
/// quadrature.
inline Estimate lieb_gap_direct(const LiebInstance& inst, const Settings& s = {}) {
  if (inst.degenerate()) return {0.0, 0.0};
  const Estimate h = entropy_direct(inst.combined(), s);
  const Estimate h1 = entropy_direct(inst.x1, s);
  const Estimate h2 = entropy_direct(inst.x2, s);
  const double a = inst.alpha;
  return {h.value - (1.0 - a) * h1.value - a * h2.value,
          h.est_error + (1.0 - a) * h1.est_error + a * h2.est_error};
}

// ---------------------------------------------------------------------------
// Deficit

/// D(g) = E[(E[X | W] - E[X | Y1, Y2])^2], integrated over the product law
/// of (Y1, Y2). E[X | Y1, Y2] splits into the two marginal posteriors and
/// E[X | W] is the posterior of the combined channel.
inline Estimate deficit_integrand(const LiebInstance& inst, double gamma, const Settings& s = {},
                                  double tol = 0.0) {
  if (!(gamma > 0.0)) throw std::invalid_argument("deficit_integrand: gamma must be > 0");
  if (inst.degenerate()) return {0.0, 0.0};
  const detail::PairChannels pc(inst, gamma);
  return detail::expect_pair(
      pc,
      [&pc](const PosteriorPoint& p1, const PosteriorPoint& p2, double y1, double y2) {
        const double d = pc.chw.mean(pc.c * y1 + pc.s * y2) - pc.c * p1.mean - pc.s * p2.mean;
        return d * d;
      },
      s, tol > 0.0 ? tol : s.tol2d, "deficit_integrand");
}

/// Conditional-mean gap at one SNR; the same quantity as deficit_integrand.
inline Estimate conditional_gap(const LiebInstance& inst, double gamma, const Settings& s = {}) {
  return deficit_integrand(inst, gamma, s);
}

struct DeficitReport {
  Estimate delta;           ///< 1/2 int_0^inf D(g) dg
  Estimate direct_gap;      ///< lieb_gap_direct
  double identity_error = 0.0;
  std::vector<std::pair<double, double>> gamma_samples;  ///< (g, D(g)) at the final level
  QuadResult quad;          ///< outer SNR integral
};

inline DeficitReport deficit(const LiebInstance& inst, const Settings& s = {}) {
  DeficitReport rep;
  rep.direct_gap = lieb_gap_direct(inst, s);
  if (inst.degenerate()) {
    rep.quad.converged = true;
    rep.quad.tol = s.tol2d;
    rep.identity_error = std::abs(rep.direct_gap.value);
    return rep;
  }
  const Settings inner = detail::serial(s);
  rep.quad = integrate_gamma(
      [&](double g) { return deficit_integrand(inst, g, inner, inner_tol(s.tol2d, g)).value; },
      gamma_rule(s, s.tol2d), &rep.gamma_samples);
  if (!rep.quad.converged) throw ConvergenceError("deficit", rep.quad);
  rep.delta = {0.5 * rep.quad.value, 0.5 * rep.quad.est_error};
  rep.identity_error = std::abs(rep.delta.value - rep.direct_gap.value);
  return rep;
}

// ---------------------------------------------------------------------------
// Per-SNR equality conditions and unconditional identities

/// Towering identity: E_W[(E[sqrt(1-a) E[X1|Y1] + sqrt(a) E[X2|Y2] | W] - E[X|W])^2].
/// Holds for every input law, so this is a numerical zero.
inline Estimate towering_residual(const LiebInstance& inst, double gamma, const Settings& s = {}) {
  if (!(gamma > 0.0)) throw std::invalid_argument("towering_residual: gamma must be > 0");
  if (inst.degenerate()) return {0.0, 0.0};
  const detail::PairChannels pc(inst, gamma);
  const Settings inner = detail::serial(s);
  return detail::expect_over_w(
      pc,
      [&](double w, const detail::Fiber& fiber) {
        const double m = fiber
                             .expect(
                                 [&](const PosteriorPoint& p1, const PosteriorPoint& p2, double,
                                     double) { return pc.c * p1.mean + pc.s * p2.mean; },
                                 inner, inner.tol1d, "towering_residual: fiber")
                             .value;
        const double d = m - pc.chw.mean(w);
        return d * d;
      },
      s, "towering_residual");
}

/// Conditional-mean condition as a residual: E[(M - E[M | W])^2] with
/// M = sqrt(1-a) E[X1|Y1] + sqrt(a) E[X2|Y2], conditioned along fibers.
inline Estimate towering_condition_residual(const LiebInstance& inst, double gamma,
                                            const Settings& s = {}) {
  if (!(gamma > 0.0)) throw std::invalid_argument("towering_condition_residual: gamma must be > 0");
  if (inst.degenerate()) return {0.0, 0.0};
  const detail::PairChannels pc(inst, gamma);
  const Settings inner = detail::serial(s);
  auto m_of = [&pc](const PosteriorPoint& p1, const PosteriorPoint& p2, double, double) {
    return pc.c * p1.mean + pc.s * p2.mean;
  };
  return detail::expect_over_w(
      pc,
      [&](double, const detail::Fiber& fiber) {
        const double m = fiber.expect(m_of, inner, inner.tol1d, "towering_condition: mean").value;
        return fiber
            .expect(
                [&](const PosteriorPoint& p1, const PosteriorPoint& p2, double y1, double y2) {
                  const double d = m_of(p1, p2, y1, y2) - m;
                  return d * d;
                },
                inner, inner.tol1d, "towering_condition: variance")
            .value;
      },
      s, "towering_condition_residual");
}

/// Score condition as a residual: E[(S - E[S | W])^2] with
/// S = sqrt(1-a) rho_Y1(Y1) + sqrt(a) rho_Y2(Y2).
inline Estimate score_condition_residual(const LiebInstance& inst, double gamma,
                                         const Settings& s = {}) {
  if (!(gamma > 0.0)) throw std::invalid_argument("score_condition_residual: gamma must be > 0");
  if (inst.degenerate()) return {0.0, 0.0};
  const detail::PairChannels pc(inst, gamma);
  const Settings inner = detail::serial(s);
  auto s_of = [&pc](const PosteriorPoint& p1, const PosteriorPoint& p2, double, double) {
    return pc.c * p1.score + pc.s * p2.score;
  };
  return detail::expect_over_w(
      pc,
      [&](double, const detail::Fiber& fiber) {
        const double m = fiber.expect(s_of, inner, inner.tol1d, "score_condition: mean").value;
        return fiber
            .expect(
                [&](const PosteriorPoint& p1, const PosteriorPoint& p2, double y1, double y2) {
                  const double d = s_of(p1, p2, y1, y2) - m;
                  return d * d;
                },
                inner, inner.tol1d, "score_condition: variance")
            .value;
      },
      s, "score_condition_residual");
}

struct ScoreConvolution {
  /// E_W[(rho_W(W) - E[S | W])^2]; zero for every input law.
  Estimate identity;
  /// E[(rho_W(W) - S)^2] over (Y1, Y2): score-form condition, zero only in the
  /// equal-variance Gaussian case.
  Estimate condition;
};

inline ScoreConvolution score_convolution_residual(const LiebInstance& inst, double gamma,
                                                   const Settings& s = {}) {
  if (!(gamma > 0.0)) throw std::invalid_argument("score_convolution_residual: gamma must be > 0");
  if (inst.degenerate()) return {};
  const detail::PairChannels pc(inst, gamma);
  const Settings inner = detail::serial(s);
  ScoreConvolution out;
  out.identity = detail::expect_over_w(
      pc,
      [&](double w, const detail::Fiber& fiber) {
        const double es = fiber
                              .expect(
                                  [&](const PosteriorPoint& p1, const PosteriorPoint& p2, double,
                                      double) { return pc.c * p1.score + pc.s * p2.score; },
                                  inner, inner.tol1d, "score_convolution: fiber")
                              .value;
        const double d = pc.chw.evaluate(w).score - es;
        return d * d;
      },
      s, "score_convolution_residual");
  out.condition = detail::expect_pair(
      pc,
      [&pc](const PosteriorPoint& p1, const PosteriorPoint& p2, double y1, double y2) {
        const double d =
            pc.chw.evaluate(pc.c * y1 + pc.s * y2).score - pc.c * p1.score - pc.s * p2.score;
        return d * d;
      },
      s, s.tol2d, "score_convolution_residual: condition");
  return out;
}

/// (1-a) J(Y1) + a J(Y2) - J(W), each Fisher information integrated from its
/// own output score.
inline Estimate fisher_deficit(const LiebInstance& inst, double gamma, const Settings& s = {}) {
  if (!(gamma > 0.0)) throw std::invalid_argument("fisher_deficit: gamma must be > 0");
  if (inst.degenerate()) return {0.0, 0.0};
  const double a = inst.alpha;
  const Estimate j1 = fisher_output(ChannelView(inst.x1, gamma), s);
  const Estimate j2 = fisher_output(ChannelView(inst.x2, gamma), s);
  const Estimate jw = fisher_output(ChannelView(inst.combined(), gamma), s);
  return {(1.0 - a) * j1.value + a * j2.value - jw.value,
          (1.0 - a) * j1.est_error + a * j2.est_error + jw.est_error};
}

/// The same inequality on the inputs themselves:
/// (1-a) J(X1) + a J(X2) - J(sqrt(1-a) X1 + sqrt(a) X2).
inline Estimate fisher_deficit_input(const LiebInstance& inst, const Settings& s = {}) {
  if (inst.degenerate()) return {0.0, 0.0};
  const double a = inst.alpha;
  const Estimate j1 = fisher_direct(inst.x1, s);
  const Estimate j2 = fisher_direct(inst.x2, s);
  const Estimate jx = fisher_direct(inst.combined(), s);
  return {(1.0 - a) * j1.value + a * j2.value - jx.value,
          (1.0 - a) * j1.est_error + a * j2.est_error + jx.est_error};
}

struct AffineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  ///< E[(E[X|Y] - slope Y - intercept)^2]
  double est_error = 0.0;
};

/// Least-squares affine fit of y -> E[X | Y = y] under the output law.
inline AffineFit affinity_diagnostic(const ChannelView& ch, const Settings& s = {}) {
  if (!(ch.gamma() > 0.0)) throw std::invalid_argument("affinity_diagnostic: gamma must be > 0");
  auto ex = [&](auto&& g, const char* what) {
    return expect_output(ch, [&](double y, const PosteriorPoint& p) { return g(y, p.mean); }, s,
                         s.tol1d, what);
  };
  const Estimate ey = ex([](double y, double) { return y; }, "affinity: E[Y]");
  const Estimate em = ex([](double, double m) { return m; }, "affinity: E[m]");
  const Estimate vy = ex([&](double y, double) { return (y - ey.value) * (y - ey.value); },
                         "affinity: Var[Y]");
  const Estimate cov = ex([&](double y, double m) { return (y - ey.value) * (m - em.value); },
                          "affinity: Cov[m,Y]");
  AffineFit fit;
  fit.slope = cov.value / vy.value;
  fit.intercept = em.value - fit.slope * ey.value;
  const Estimate res = ex(
      [&](double y, double m) {
        const double d = m - fit.slope * y - fit.intercept;
        return d * d;
      },
      "affinity: residual");
  fit.residual = res.value;
  fit.est_error = res.est_error + ey.est_error + em.est_error + vy.est_error + cov.est_error;
  return fit;
}

// ---------------------------------------------------------------------------
// Relative entropy

/// int p log(p / q) by quadrature over the window of p.
inline Estimate kl_direct(const GaussMix& p, const GaussMix& q, const Settings& s = {}) {
  const Window w = window(p);
  const QuadResult r = integrate_line(
      [&](double x) {
        const double lp = log_pdf(p, x);
        return std::exp(lp) * (lp - log_pdf(q, x));
      },
      line_rule(s, w), w.center, w.half_width);
  if (!r.converged) throw ConvergenceError("kl_direct", r);
  return {r.value, r.est_error};
}

/// E_P[(E_P[X|Y] - E_Q[X|Y])^2] with Y the output of the P-channel.
inline Estimate mismatched_mse(const GaussMix& p, const GaussMix& q, double gamma,
                               const Settings& s = {}, double tol = 0.0) {
  const ChannelView chp(p, gamma);
  const ChannelView chq(q, gamma);
  return expect_output(
      chp,
      [&](double y, const PosteriorPoint& pp) {
        const double d = pp.mean - chq.mean(y);
        return d * d;
      },
      s, tol > 0.0 ? tol : s.tol1d, "mismatched_mse");
}

/// D(P||Q) = 1/2 int_0^inf E_P[(E_P[X|Y] - E_Q[X|Y])^2] dg.
inline Estimate kl_mismatched(const GaussMix& p, const GaussMix& q, const Settings& s = {}) {
  const Settings inner = detail::serial(s);
  const QuadResult r = integrate_gamma(
      [&](double g) { return mismatched_mse(p, q, g, inner, inner_tol(s.tol1d, g)).value; },
      gamma_rule(s, s.tol1d));
  if (!r.converged) throw ConvergenceError("kl_mismatched", r);
  return {0.5 * r.value, 0.5 * r.est_error};
}

/// E_P[(rho_P(Y) - rho_Q(Y))^2] with analytic output scores.
inline Estimate relative_fisher(const GaussMix& p, const GaussMix& q, double gamma,
                                const Settings& s = {}, double tol = 0.0) {
  if (!(gamma > 0.0)) throw std::invalid_argument("relative_fisher: gamma must be > 0");
  const ChannelView chp(p, gamma);
  const ChannelView chq(q, gamma);
  return expect_output(
      chp,
      [&](double y, const PosteriorPoint& pp) {
        const double d = pp.score - chq.evaluate(y).score;
        return d * d;
      },
      s, tol > 0.0 ? tol : s.tol1d, "relative_fisher");
}

/// Below this SNR the ratio relative_fisher(g) / g is extrapolated.
inline constexpr double kSmallGamma = 1e-3;

/// D(P||Q) = 1/2 int_0^inf relative_fisher(g) / g dg.
inline Estimate kl_via_fisher(const GaussMix& p, const GaussMix& q, const Settings& s = {}) {
  const Settings inner = detail::serial(s);
  auto ratio = [&](double g) {
    return relative_fisher(p, q, g, inner, inner_tol(s.tol1d, g) * g).value / g;
  };
  // Quadratic through g = 1e-3, 2e-3, 4e-3.
  const double g0 = kSmallGamma, g1 = 2 * kSmallGamma, g2 = 4 * kSmallGamma;
  const double r0 = ratio(g0), r1 = ratio(g1), r2 = ratio(g2);
  auto extrapolate = [&](double g) {
    return r0 * (g - g1) * (g - g2) / ((g0 - g1) * (g0 - g2)) +
           r1 * (g - g0) * (g - g2) / ((g1 - g0) * (g1 - g2)) +
           r2 * (g - g0) * (g - g1) / ((g2 - g0) * (g2 - g1));
  };
  const QuadResult r = integrate_gamma(
      [&](double g) { return g < kSmallGamma ? extrapolate(g) : ratio(g); },
      gamma_rule(s, s.tol1d));
  if (!r.converged) throw ConvergenceError("kl_via_fisher", r);
  return {0.5 * r.value, 0.5 * r.est_error};
}

// ---------------------------------------------------------------------------
// Diagnostics over an SNR grid

struct DiagnosticsRow {
  double gamma = 0.0;
  Estimate conditional_gap;
  Estimate towering_condition;
  Estimate score_condition;
  Estimate score_form;
  Estimate fisher_deficit;        ///< signed
  Estimate towering_identity;     ///< unconditional, expected ~0
  Estimate convolution_identity;  ///< unconditional, expected ~0
  AffineFit affine_x1;
  AffineFit affine_x2;

  /// Residuals that vanish exactly in the equality case; all >= 0.
  std::vector<std::pair<std::string, double>> equality_residuals() const {
    return {{"conditional_gap", conditional_gap.value},
            {"towering_condition", towering_condition.value},
            {"score_condition", score_condition.value},
            {"score_form", score_form.value},
            {"fisher_deficit", std::abs(fisher_deficit.value)}};
  }
};

struct DiagnosticsReport {
  std::vector<DiagnosticsRow> rows;
  std::optional<DeficitReport> deficit;  ///< when requested
  std::string verdict;                   ///< "equality-case" or "strict"
};

inline DiagnosticsRow diagnose_at(const LiebInstance& inst, double gamma, const Settings& s = {}) {
  DiagnosticsRow row;
  row.gamma = gamma;
  row.conditional_gap = conditional_gap(inst, gamma, s);
  row.towering_condition = towering_condition_residual(inst, gamma, s);
  row.score_condition = score_condition_residual(inst, gamma, s);
  const ScoreConvolution sc = score_convolution_residual(inst, gamma, s);
  row.score_form = sc.condition;
  row.convolution_identity = sc.identity;
  row.fisher_deficit = fisher_deficit(inst, gamma, s);
  row.towering_identity = towering_residual(inst, gamma, s);
  row.affine_x1 = affinity_diagnostic(ChannelView(inst.x1, gamma), s);
  row.affine_x2 = affinity_diagnostic(ChannelView(inst.x2, gamma), s);
  return row;
}

inline DiagnosticsReport diagnose(const LiebInstance& inst, const std::vector<double>& gammas,
                                  const Settings& s = {}, bool with_deficit = true) {
  if (gammas.empty()) throw std::invalid_argument("diagnose: empty gamma grid");
  DiagnosticsReport rep;
  bool equal = true;
  for (double g : gammas) {
    rep.rows.push_back(diagnose_at(inst, g, s));
    for (const auto& [name, v] : rep.rows.back().equality_residuals())
      if (!(v <= kEqualityThreshold)) equal = false;
  }
  if (with_deficit) {
    rep.deficit = deficit(inst, s);
    if (!(rep.deficit->delta.value <= kEqualityThreshold)) equal = false;
  }
  rep.verdict = equal ? "equality-case" : "strict";
  return rep;
}

}  // namespace epi
