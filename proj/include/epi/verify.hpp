// Self-check suites run by `epi verify`: every identity the library claims,
// evaluated on fixed and seeded-random instances, with one residual per
// check and a deterministic JSON summary.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "epi/channel.hpp"
#include "epi/gauss_mix.hpp"
#include "epi/identities.hpp"
#include "epi/io.hpp"

namespace epi {

struct Check {
  std::string name;
  double residual = 0.0;
  double threshold = 0.0;
  bool lower_bound = false;  ///< pass when residual >= threshold instead of <=
  bool passed = false;
  std::string detail;
};

struct VerifySummary {
  std::string suite;
  std::vector<Check> checks;

  std::size_t failures() const {
    std::size_t n = 0;
    for (const Check& c : checks) n += !c.passed;
    return n;
  }
  bool passed() const { return failures() == 0; }

  nlohmann::json to_json(const RunConfig& cfg) const {
    auto one = [](const Check& c) {
      nlohmann::json j{{"name", c.name},
                       {"residual", c.residual},
                       {"threshold", c.threshold},
                       {"bound", c.lower_bound ? "min" : "max"},
                       {"passed", c.passed}};
      if (!c.detail.empty()) j["detail"] = c.detail;
      return j;
    };
    nlohmann::json all = nlohmann::json::array();
    nlohmann::json failed = nlohmann::json::array();
    for (const Check& c : checks) {
      all.push_back(one(c));
      if (!c.passed && failed.size() < 10) failed.push_back(one(c));
    }
    return {{"command", "verify"},
            {"suite", suite},
            {"settings",
             {{"quad.tol1d", cfg.quad.tol1d},
              {"quad.tol2d", cfg.quad.tol2d},
              {"quad.max_levels", cfg.quad.max_levels},
              {"mc.seed", cfg.mc_seed},
              {"mc.samples", cfg.mc_samples}}},
            {"passed", passed()},
            {"n_checks", checks.size()},
            {"n_failed", failures()},
            {"failures", failed},
            {"checks", all},
            {"version", kVersion}};
  }
};

/// Mixture with 1 to `max_components` components, means in [-2, 2] and
/// variances in [0.3, 2].
inline GaussMix random_mixture(std::mt19937_64& rng, int max_components = 3) {
  std::uniform_int_distribution<int> count(1, max_components);
  std::uniform_real_distribution<double> weight(0.2, 1.0), mean(-2.0, 2.0), var(0.3, 2.0);
  const int k = count(rng);
  std::vector<double> w(k), mu(k), v(k);
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    w[i] = weight(rng);
    total += w[i];
    mu[i] = mean(rng);
    v[i] = var(rng);
  }
  for (double& x : w) x /= total;
  return {std::move(w), std::move(mu), std::move(v)};
}

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

namespace detail {

inline McEstimate mc_average(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

inline std::vector<double> normals(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> out(n);
  for (double& x : out) x = z(rng);
  return out;
}

}  // namespace detail

/// Simulated E[(X - E[X|Y])^2].
inline McEstimate mc_mmse(const GaussMix& gm, double gamma, std::uint64_t seed, std::size_t n) {
  const ChannelView ch(gm, gamma);
  const std::vector<Sample> xs = sample(gm, seed, n);
  const std::vector<double> zs = detail::normals(seed ^ 0x9e3779b97f4a7c15ULL, n);
  std::vector<double> sq(n);
  const double sg = std::sqrt(gamma);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = xs[i].value - ch.mean(sg * xs[i].value + zs[i]);
    sq[i] = e * e;
  }
  return detail::mc_average(sq);
}

/// Simulated D(gamma) from draws of (X1, X2, Z1, Z2).
inline McEstimate mc_deficit_integrand(const LiebInstance& inst, double gamma, std::uint64_t seed,
                                       std::size_t n) {
  const ChannelView ch1(inst.x1, gamma), ch2(inst.x2, gamma), chw(inst.combined(), gamma);
  const std::vector<Sample> x1 = sample(inst.x1, seed, n);
  const std::vector<Sample> x2 = sample(inst.x2, seed + 1, n);
  const std::vector<double> z1 = detail::normals(seed + 2, n);
  const std::vector<double> z2 = detail::normals(seed + 3, n);
  const double c = std::sqrt(1.0 - inst.alpha), s = std::sqrt(inst.alpha), sg = std::sqrt(gamma);
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y1 = sg * x1[i].value + z1[i];
    const double y2 = sg * x2[i].value + z2[i];
    const double d = chw.mean(c * y1 + s * y2) - c * ch1.mean(y1) - s * ch2.mean(y2);
    sq[i] = d * d;
  }
  return detail::mc_average(sq);
}

namespace detail {

/// Accumulates checks. A failing computation (non-convergence, domain
/// error) becomes a failed check rather than aborting the suite.
class Checker {
 public:
  explicit Checker(const RunConfig& cfg) : cfg_(cfg) {}

  const Settings& s() const { return cfg_.quad; }
  const RunConfig& cfg() const { return cfg_; }

  /// |value - reference| plus both error estimates must stay under
  /// `threshold`; the quadrature tolerance `tol` must not exceed it either,
  /// since a looser tolerance cannot certify agreement at that level.
  void agree(const std::string& name, const std::function<std::pair<Estimate, Estimate>()>& f,
             double threshold, double tol) {
    run(name, threshold, false, [&](Check& c) {
      const auto [a, b] = f();
      c.residual = std::abs(a.value - b.value) + a.est_error + b.est_error;
      if (tol > threshold) {
        c.detail = "quadrature tolerance " + format_number(tol) + " exceeds threshold";
        return false;
      }
      return c.residual <= threshold;
    });
  }

  /// Non-negative quantity that must vanish: value + est_error <= threshold.
  void small(const std::string& name, const std::function<Estimate()>& f, double threshold,
             double tol) {
    agree(name, [&] { return std::pair{f(), Estimate{0.0, 0.0}}; }, threshold, tol);
  }

  /// Quantity that must be bounded away from zero.
  void large(const std::string& name, const std::function<Estimate()>& f, double threshold) {
    run(name, threshold, true, [&](Check& c) {
      const Estimate e = f();
      c.residual = e.value - e.est_error;
      return c.residual >= threshold;
    });
  }

  /// Direct residual with no quadrature involved.
  void exact(const std::string& name, const std::function<double()>& f, double threshold) {
    run(name, threshold, false, [&](Check& c) {
      c.residual = f();
      return c.residual <= threshold;
    });
  }

  std::vector<Check> take() { return std::move(checks_); }

 private:
  template <class Body>
  void run(const std::string& name, double threshold, bool lower, Body&& body) {
    Check c;
    c.name = name;
    c.threshold = threshold;
    c.lower_bound = lower;
    try {
      c.passed = body(c);
    } catch (const ConvergenceError& e) {
      c.passed = false;
      c.residual = std::numeric_limits<double>::infinity();
      c.detail = std::string("no convergence: ") + e.what();
    } catch (const std::exception& e) {
      c.passed = false;
      c.residual = std::numeric_limits<double>::infinity();
      c.detail = e.what();
    }
    if (!std::isfinite(c.residual)) c.passed = false;
    checks_.push_back(std::move(c));
  }

  const RunConfig& cfg_;
  std::vector<Check> checks_;
};

inline std::string tag(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

inline Estimate exact_value(double v) { return {v, 0.0}; }

inline void fast_checks(Checker& k) {
  const Settings& s = k.s();
  const double t1 = s.tol1d;
  const double t2 = s.tol2d;
  const GaussMix n01 = GaussMix::gaussian(0.0, 1.0);
  const GaussMix n04 = GaussMix::gaussian(0.0, 4.0);
  const GaussMix bimodal({0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5});
  const GaussMix separated({0.5, 0.5}, {-2.0, 2.0}, {0.2, 0.2});
  const GaussMix skewed({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6});
  const std::vector<std::pair<std::string, GaussMix>> mixes{
      {"n01", n01}, {"bimodal", bimodal}, {"skewed", skewed}};

  // Channel.
  k.exact("mmse.closed_form.n01.g1",
          [&] { return std::abs(mmse(ChannelView(n01, 1.0), s).value - 0.5); }, 1e-9);
  for (const auto& [name, gm] : mixes)
    for (double g : k.cfg().gamma_grid)
      k.agree("fisher_output.identity." + name + ".g" + tag(g),
              [&] {
                const ChannelView ch(gm, g);
                const Estimate m = mmse(ch, s);
                return std::pair{fisher_output(ch, s),
                                 Estimate{1.0 - g * m.value, g * m.est_error}};
              },
              1e-7, t1);
  k.exact("output_score.path_equivalence",
          [&] {
            double worst = 0.0;
            for (const auto& [name, gm] : mixes)
              for (double g : {0.1, 1.0, 5.0}) {
                const ChannelView ch(gm, g);
                for (int i = 0; i < 64; ++i) {
                  const double y = -8.0 + 16.0 * i / 63.0;
                  worst = std::max(worst, std::abs(output_score(ch, y, ScorePath::analytic) -
                                                   output_score(ch, y, ScorePath::posterior)));
                }
              }
            return worst;
          },
          1e-8);
  k.agree("posterior_mean.brute_force.bimodal.g2",
          [&] {
            const double g = 2.0, y = 0.7, sg = std::sqrt(g);
            const Window w = window(bimodal);
            auto lik = [&](double x) { return pdf(bimodal, x) * std::exp(-0.5 * (y - sg * x) * (y - sg * x)); };
            const QuadRule rule = line_rule(s, w);
            const QuadResult num = integrate_line([&](double x) { return x * lik(x); }, rule, w.center, w.half_width);
            const QuadResult den = integrate_line(lik, rule, w.center, w.half_width);
            return std::pair{exact_value(posterior_mean(ChannelView(bimodal, g), y)),
                             Estimate{num.value / den.value, (num.est_error + den.est_error) / den.value}};
          },
          1e-8, t1);
  k.agree("suboptimal_penalty.decomposition.posterior_mean",
          [&] {
            const ChannelView ch(bimodal, 1.0);
            const PenaltyReport r = suboptimal_penalty(ch, [&](double y) { return ch.mean(y); }, s);
            return std::pair{r.mmse, Estimate{r.mse.value - r.penalty.value,
                                              r.mse.est_error + r.penalty.est_error}};
          },
          1e-7, t2);
  k.agree("suboptimal_penalty.decomposition.linear",
          [&] {
            const ChannelView ch(bimodal, 1.0);
            const PenaltyReport r = suboptimal_penalty(ch, [](double y) { return 0.4 * y + 0.1; }, s);
            return std::pair{r.mmse, Estimate{r.mse.value - r.penalty.value,
                                              r.mse.est_error + r.penalty.est_error}};
          },
          1e-7, t2);
  k.agree("suboptimal_penalty.decomposition.clipped",
          [&] {
            const ChannelView ch(skewed, 2.0);
            const PenaltyReport r =
                suboptimal_penalty(ch, [](double y) { return std::tanh(y); }, s);
            return std::pair{r.mmse, Estimate{r.mse.value - r.penalty.value,
                                              r.mse.est_error + r.penalty.est_error}};
          },
          1e-7, t2);

  // Entropy.
  k.agree("entropy.direct.closed_form.n04",
          [&] { return std::pair{entropy_direct(n04, s), exact_value(gaussian_entropy(4.0))}; }, 1e-6, t1);
  k.agree("entropy.immse.closed_form.n04",
          [&] { return std::pair{entropy_immse(n04, s), exact_value(gaussian_entropy(4.0))}; }, 1e-5, t1);
  k.agree("entropy.immse_vs_direct.bimodal",
          [&] { return std::pair{entropy_immse(bimodal, s), entropy_direct(bimodal, s)}; }, 1e-4, t1);

  // Lieb gap, deficit, Fisher deficit.
  const LiebInstance equal(n01, n01, 0.5);
  const LiebInstance unequal(n01, n04, 0.5);
  const LiebInstance mixed(bimodal, n01, 0.5);
  k.agree("lieb_gap.closed_form.n01_n04",
          [&] { return std::pair{lieb_gap_direct(unequal, s), exact_value(0.5 * std::log(1.25))}; },
          1e-6, t1);
  k.agree("deficit.closed_form.n01_n04",
          [&] { return std::pair{deficit(unequal, s).delta, exact_value(0.5 * std::log(1.25))}; },
          1e-4, t2);
  for (const auto& [name, inst] :
       {std::pair{"n01_n04", unequal}, std::pair{"bimodal_n01", mixed}})
    k.agree(std::string("deficit.identity.") + name,
            [&] {
              const DeficitReport r = deficit(inst, s);
              // The criterion scales with the size of the gap itself.
              const double scale = 1.0 + std::abs(r.direct_gap.value);
              return std::pair{Estimate{r.delta.value / scale, r.delta.est_error / scale},
                               Estimate{r.direct_gap.value / scale, r.direct_gap.est_error / scale}};
            },
            1e-4, t2);
  k.small("deficit.equality.n01_n01", [&] { return deficit(equal, s).delta; }, 1e-7, t2);
  k.agree("fisher_deficit.closed_form.n01_n04.g1",
          [&] { return std::pair{fisher_deficit(unequal, 1.0, s), exact_value(9.0 / 140.0)}; }, 1e-6,
          t1);

  // Unconditional identities and equality conditions.
  for (const auto& [name, inst] : {std::pair{"n01_n04", unequal}, std::pair{"bimodal_n01", mixed}}) {
    k.small(std::string("towering.identity.") + name,
            [&] { return towering_residual(inst, 1.0, s); }, 1e-7, t1);
    k.small(std::string("score_convolution.identity.") + name,
            [&] { return score_convolution_residual(inst, 1.0, s).identity; }, 1e-7, t1);
  }
  k.small("score_convolution.condition.n01_n01",
          [&] { return score_convolution_residual(equal, 1.0, s).condition; }, 1e-7, t2);
  k.large("score_convolution.condition.n01_n04",
          [&] { return score_convolution_residual(unequal, 1.0, s).condition; }, 1e-4);

  // Affine posterior means.
  k.small("affine.residual.n31",
          [&] {
            const AffineFit f = affinity_diagnostic(ChannelView(GaussMix::gaussian(3.0, 1.0), 1.0), s);
            return Estimate{f.residual, f.est_error};
          },
          1e-9, t1);
  k.agree("affine.slope.n31",
          [&] {
            const AffineFit f = affinity_diagnostic(ChannelView(GaussMix::gaussian(3.0, 1.0), 1.0), s);
            return std::pair{Estimate{f.slope, 0.0}, exact_value(0.5)};
          },
          1e-9, t1);
  k.large("affine.residual.separated",
          [&] {
            const AffineFit f = affinity_diagnostic(ChannelView(separated, 1.0), s);
            return Estimate{f.residual, f.est_error};
          },
          1e-4);

  // EPI forms.
  k.small("epi_gap.gaussian_pair",
          [&] {
            const Estimate e = epi_gap(n01, GaussMix::gaussian(0.5, 3.0), s);
            return Estimate{std::abs(e.value), e.est_error};
          },
          1e-6, t1);
  k.small("epi_to_lieb.gaussian_pair",
          [&] {
            const Estimate e = lieb_gap_direct(epi_to_lieb(n01, GaussMix::gaussian(0.5, 3.0), s), s);
            return Estimate{std::abs(e.value), e.est_error};
          },
          1e-6, t1);

  // Relative entropy.
  const std::vector<std::pair<std::string, std::pair<GaussMix, GaussMix>>> kl_pairs{
      {"n11_n01", {GaussMix::gaussian(1.0, 1.0), n01}},
      {"bimodal_n02", {bimodal, GaussMix::gaussian(0.0, 2.0)}}};
  for (const auto& [name, pq] : kl_pairs) {
    const auto& [p, q] = pq;
    auto rel = [&](const Estimate& a, const Estimate& b) {
      const double scale = std::max(std::abs(b.value), 1e-12);
      return std::pair{Estimate{a.value / scale, a.est_error / scale},
                       Estimate{b.value / scale, b.est_error / scale}};
    };
    k.agree("kl.mismatched_vs_direct." + name,
            [&] { return rel(kl_mismatched(p, q, s), kl_direct(p, q, s)); }, 1e-3, t1);
    k.agree("kl.fisher_vs_direct." + name,
            [&] { return rel(kl_via_fisher(p, q, s), kl_direct(p, q, s)); }, 1e-3, t1);
  }
  k.agree("kl.closed_form.n11_n01",
          [&] { return std::pair{kl_direct(GaussMix::gaussian(1.0, 1.0), n01, s), exact_value(0.5)}; },
          1e-4, t1);

  // Parallel evaluation must not change a single bit.
  k.exact("quadrature.thread_invariance",
          [&] {
            Settings par = s;
            par.threads = 4;
            Settings ser = s;
            ser.threads = 1;
            const double a = entropy_immse(skewed, ser).value;
            const double b = entropy_immse(skewed, par).value;
            const double c = deficit_integrand(mixed, 1.0, ser).value;
            const double d = deficit_integrand(mixed, 1.0, par).value;
            return (a == b && c == d) ? 0.0 : 1.0;
          },
          0.0);
}

inline void full_checks(Checker& k) {
  const Settings& s = k.s();
  const RunConfig& cfg = k.cfg();
  std::mt19937_64 rng(cfg.mc_seed);

  // Random Lieb instances.
  const double alphas[] = {0.25, 0.5, 0.8};
  for (int i = 0; i < 12; ++i) {
    const LiebInstance inst(random_mixture(rng), random_mixture(rng), alphas[i % 3]);
    k.agree("random.deficit.identity." + std::to_string(i),
            [&] {
              const DeficitReport r = deficit(inst, s);
              const double scale = 1.0 + std::abs(r.direct_gap.value);
              return std::pair{Estimate{r.delta.value / scale, r.delta.est_error / scale},
                               Estimate{r.direct_gap.value / scale, r.direct_gap.est_error / scale}};
            },
            1e-4, s.tol2d);
  }
  for (int i = 0; i < 8; ++i) {
    const GaussMix gm = random_mixture(rng);
    k.agree("random.entropy.immse_vs_direct." + std::to_string(i),
            [&] { return std::pair{entropy_immse(gm, s), entropy_direct(gm, s)}; }, 1e-4, s.tol1d);
  }
  for (int i = 0; i < 4; ++i) {
    const LiebInstance inst(random_mixture(rng), random_mixture(rng), 0.5);
    for (double g : cfg.gamma_grid) {
      const std::string id = std::to_string(i) + ".g" + tag(g);
      k.small("random.towering.identity." + id, [&] { return towering_residual(inst, g, s); }, 1e-7,
              s.tol1d);
      k.small("random.score_convolution.identity." + id,
              [&] { return score_convolution_residual(inst, g, s).identity; }, 1e-7, s.tol1d);
    }
  }
  for (int i = 0; i < 4; ++i) {
    const GaussMix p = random_mixture(rng);
    const GaussMix q = random_mixture(rng);
    k.agree("random.kl.mismatched_vs_fisher." + std::to_string(i),
            [&] {
              const Estimate a = kl_mismatched(p, q, s);
              const Estimate b = kl_via_fisher(p, q, s);
              const double scale = std::max(std::abs(b.value), 1e-12);
              return std::pair{Estimate{a.value / scale, a.est_error / scale},
                               Estimate{b.value / scale, b.est_error / scale}};
            },
            1e-3, s.tol1d);
  }

  // Monte Carlo cross-checks: |quadrature - simulation| in standard errors.
  const std::size_t n = static_cast<std::size_t>(cfg.mc_samples);
  const GaussMix bimodal({0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0});
  k.exact("mc.mmse.bimodal.g1",
          [&] {
            const McEstimate mc = mc_mmse(bimodal, 1.0, cfg.mc_seed, n);
            return std::abs(mmse(ChannelView(bimodal, 1.0), s).value - mc.mean) / mc.std_error;
          },
          4.0);
  const LiebInstance unequal(GaussMix::gaussian(0.0, 1.0), GaussMix::gaussian(0.0, 4.0), 0.5);
  k.exact("mc.deficit_integrand.n01_n04.g1",
          [&] {
            const McEstimate mc = mc_deficit_integrand(unequal, 1.0, cfg.mc_seed, n);
            return std::abs(deficit_integrand(unequal, 1.0, s).value - mc.mean) / mc.std_error;
          },
          4.0);
}

}  // namespace detail

/// Run the "fast" or "full" suite; full is a superset of fast.
inline VerifySummary run_verify(const std::string& suite, const RunConfig& cfg) {
  if (suite != "fast" && suite != "full")
    throw InputError("verify: unknown suite '" + suite + "' (expected fast or full)");
  detail::Checker k(cfg);
  detail::fast_checks(k);
  if (suite == "full") detail::full_checks(k);
  return {suite, k.take()};
}

}  // namespace epi
