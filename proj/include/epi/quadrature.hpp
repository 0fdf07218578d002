// Deterministic composite quadrature on the real line, the plane, and the
// half line [0, inf) used by the SNR integrals.
//
// Every rule refines by uniform panel doubling and reports the difference
// between the last two levels as its error estimate. Node values are summed
// with a fixed-shape pairwise reduction so the result does not depend on how
// many threads evaluated the nodes.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <exception>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace epi {

enum class QuadKind { gauss_legendre_composite, trapezoid_oracle };
enum class DomainTransform { identity, rational };
enum class Refinement { none, double_until_tol };

/// Outcome of one integration.
///
/// `value` is the finest level, `previous` the level before it. When
/// refinement is off both are equal and `est_error` is zero.
struct QuadResult {
  double value = 0.0;
  double previous = 0.0;
  double est_error = 0.0;
  /// Error estimate of the level before the last one; NaN when fewer than
  /// three levels were evaluated.
  double prev_est_error = std::numeric_limits<double>::quiet_NaN();
  int levels_used = 0;
  bool converged = false;
  double tol = 0.0;
};

/// A value together with the accumulated quadrature error estimate that
/// produced it.
struct Estimate {
  double value = 0.0;
  double est_error = 0.0;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what_integral, const QuadResult& r)
      : std::runtime_error(describe(what_integral, r)), result_(r) {}

  const QuadResult& result() const noexcept { return result_; }

 private:
  static std::string describe(const std::string& what_integral, const QuadResult& r) {
    std::ostringstream os;
    os.precision(17);
    os << what_integral << ": quadrature did not converge after " << r.levels_used
       << " levels (last " << r.value << ", previous " << r.previous << ", est-error "
       << r.est_error << ", tol " << r.tol << ")";
    return os.str();
  }

  QuadResult result_;
};

/// Raised when an integrand returns NaN or infinity; `abscissa` is the
/// offending point in the caller's variable (gamma for SNR integrals).
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what_integral, double abscissa)
      : std::runtime_error(describe(what_integral, abscissa)), abscissa_(abscissa) {}

  double abscissa() const noexcept { return abscissa_; }

 private:
  static std::string describe(const std::string& what_integral, double x) {
    std::ostringstream os;
    os.precision(17);
    os << what_integral << ": integrand is not finite at " << x;
    return os.str();
  }

  double abscissa_;
};

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
struct ReferenceRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  static ReferenceRule gauss_legendre(int n) {
    if (n < 2) throw std::invalid_argument("gauss_legendre: need at least 2 nodes");
    ReferenceRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      // Recompute the derivative at the converged root.
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      r.nodes[i] = -x;
      r.nodes[n - 1 - i] = x;
      r.weights[i] = w;
      r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;
    return r;
  }
};

/// A quadrature plan. `panels` is the starting panel count of the first
/// refinement level; each further level doubles it.
struct QuadRule {
  QuadKind kind = QuadKind::gauss_legendre_composite;
  int panels = 2;
  int nodes_per_panel = 16;
  DomainTransform transform = DomainTransform::identity;
  Refinement refinement = Refinement::double_until_tol;
  double tol = 1e-9;
  int max_levels = 12;
  /// Worker threads used to evaluate node values; 0 and 1 both mean serial.
  unsigned threads = 1;

  void validate() const {
    if (nodes_per_panel < 2) throw std::invalid_argument("QuadRule: nodes_per_panel must be >= 2");
    if (panels < 1) throw std::invalid_argument("QuadRule: panels must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("QuadRule: tol must be > 0");
    if (max_levels < 1 || max_levels > 16)
      throw std::invalid_argument("QuadRule: max_levels must be in [1, 16]");
  }

  static QuadRule composite(double tol, int max_levels, int start_panels = 2, int nodes = 16) {
    QuadRule r;
    r.tol = tol;
    r.max_levels = max_levels;
    r.panels = start_panels;
    r.nodes_per_panel = nodes;
    return r;
  }

  static QuadRule trapezoid(int points) {
    QuadRule r;
    r.kind = QuadKind::trapezoid_oracle;
    r.panels = points - 1;
    r.refinement = Refinement::none;
    return r;
  }
};

namespace detail {

/// Sum in a fixed binary-tree order independent of the caller.
inline double pairwise_sum(std::span<const double> v) {
  constexpr std::size_t kLeaf = 8;
  if (v.size() <= kLeaf) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Evaluate fn(i) for i in [0, n) into out, splitting the index range into
/// contiguous blocks across threads. The first exception in index order is
/// rethrown.
template <class Fn>
void parallel_fill(std::vector<double>& out, std::size_t n, unsigned threads, Fn&& fn) {
  out.resize(n);
  if (threads <= 1 || n < 2 * static_cast<std::size_t>(threads)) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    const std::size_t block = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t lo = std::min(n, t * block);
      const std::size_t hi = std::min(n, lo + block);
      pool.emplace_back([&, t, lo, hi] {
        try {
          for (std::size_t i = lo; i < hi; ++i) out[i] = fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Abscissae and weights of one refinement level on [lo, hi].
struct AxisNodes {
  std::vector<double> x;
  std::vector<double> w;
};

inline AxisNodes axis_nodes(const QuadRule& rule, const ReferenceRule& ref, int panels, double lo,
                            double hi) {
  AxisNodes a;
  const double h = (hi - lo) / panels;
  if (rule.kind == QuadKind::trapezoid_oracle) {
    a.x.resize(panels + 1);
    a.w.assign(panels + 1, h);
    for (int i = 0; i <= panels; ++i) a.x[i] = lo + i * h;
    a.w.front() = a.w.back() = 0.5 * h;
    return a;
  }
  const int n = rule.nodes_per_panel;
  a.x.resize(static_cast<std::size_t>(panels) * n);
  a.w.resize(a.x.size());
  for (int p = 0; p < panels; ++p) {
    const double left = lo + p * h;
    for (int i = 0; i < n; ++i) {
      a.x[p * n + i] = left + 0.5 * h * (ref.nodes[i] + 1.0);
      a.w[p * n + i] = 0.5 * h * ref.weights[i];
    }
  }
  return a;
}

/// Drive the doubling loop: `level_sum(panels)` returns the integral
/// estimate at that panel count.
template <class LevelSum>
QuadResult refine(const QuadRule& rule, LevelSum&& level_sum) {
  rule.validate();
  QuadResult r;
  r.tol = rule.tol;
  if (rule.refinement == Refinement::none) {
    r.value = r.previous = level_sum(rule.panels);
    r.levels_used = 1;
    r.converged = true;
    return r;
  }
  int panels = rule.panels;
  double prev = level_sum(panels);
  r.value = r.previous = prev;
  r.levels_used = 1;
  double last_err = std::numeric_limits<double>::quiet_NaN();
  for (int level = 1; level < rule.max_levels; ++level) {
    panels *= 2;
    const double cur = level_sum(panels);
    r.prev_est_error = last_err;
    r.previous = prev;
    r.value = cur;
    r.est_error = std::abs(cur - prev);
    r.levels_used = level + 1;
    last_err = r.est_error;
    if (r.est_error <= rule.tol) {
      r.converged = true;
      return r;
    }
    prev = cur;
  }
  r.converged = false;
  if (r.levels_used == 1) r.est_error = std::numeric_limits<double>::infinity();
  return r;
}

inline const ReferenceRule& reference_for(const QuadRule& rule, ReferenceRule& storage) {
  if (rule.kind == QuadKind::gauss_legendre_composite)
    storage = ReferenceRule::gauss_legendre(rule.nodes_per_panel);
  return storage;
}

inline void require_finite(double v, double x, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(what, x);
}

}  // namespace detail

/// Integrate f over [center - half_width, center + half_width].
template <class F>
  requires std::invocable<F&, double>
QuadResult integrate_line(F&& f, const QuadRule& rule, double center, double half_width) {
  if (!(half_width > 0.0) || !std::isfinite(center) || !std::isfinite(half_width))
    throw std::invalid_argument("integrate_line: invalid window");
  ReferenceRule storage;
  const ReferenceRule& ref = detail::reference_for(rule, storage);
  const double lo = center - half_width;
  const double hi = center + half_width;
  std::vector<double> values;
  return detail::refine(rule, [&](int panels) {
    const auto nodes = detail::axis_nodes(rule, ref, panels, lo, hi);
    detail::parallel_fill(values, nodes.x.size(), rule.threads, [&](std::size_t i) {
      const double v = f(nodes.x[i]);
      detail::require_finite(v, nodes.x[i], "integrate_line");
      return nodes.w[i] * v;
    });
    return detail::pairwise_sum(values);
  });
}

/// Integrate f(gamma) over [0, inf) through gamma = u / (1 - u). Only
/// interior Gauss-Legendre nodes are used, so u = 1 is never evaluated.
template <class F>
  requires std::invocable<F&, double>
QuadResult integrate_gamma(F&& f, const QuadRule& rule,
                           std::vector<std::pair<double, double>>* trace = nullptr) {
  if (rule.kind != QuadKind::gauss_legendre_composite)
    throw std::invalid_argument("integrate_gamma: needs an open (Gauss-Legendre) rule");
  ReferenceRule storage;
  const ReferenceRule& ref = detail::reference_for(rule, storage);
  std::vector<double> values;
  std::vector<double> raw;
  return detail::refine(rule, [&](int panels) {
    const auto nodes = detail::axis_nodes(rule, ref, panels, 0.0, 1.0);
    const std::size_t n = nodes.x.size();
    raw.resize(n);
    detail::parallel_fill(values, n, rule.threads, [&](std::size_t i) {
      const double u = nodes.x[i];
      const double one_minus = 1.0 - u;
      const double gamma = u / one_minus;
      const double v = f(gamma);
      if (std::isnan(v)) throw NonFiniteError("integrate_gamma", gamma);
      detail::require_finite(v, gamma, "integrate_gamma");
      raw[i] = v;
      return nodes.w[i] * v / (one_minus * one_minus);
    });
    if (trace) {
      trace->clear();
      trace->reserve(n);
      for (std::size_t i = 0; i < n; ++i)
        trace->emplace_back(nodes.x[i] / (1.0 - nodes.x[i]), raw[i]);
    }
    return detail::pairwise_sum(values);
  });
}

struct PlanePoint {
  double first = 0.0;
  double second = 0.0;
};

/// Batched plane integrand. Once per refinement level the engine calls
/// `g.bind(xs, ys)`; the returned callable `row(i, out)` must fill
/// `out[j]` with f(xs[i], ys[j]) and is invoked concurrently for distinct
/// rows. Lets callers hoist per-axis work out of the inner loop.
template <class G>
concept GridIntegrand = requires(const G& g, std::span<const double> xs,
                                 std::span<const double> ys) {
  g.bind(xs, ys);
};

/// Largest tensor grid a plane level may use. Levels beyond it are not
/// evaluated and the result reports non-convergence instead.
inline constexpr std::size_t kMaxPlaneNodes = std::size_t{1} << 24;

/// Tensor-product integration over a rectangle. Both axes refine together.
/// `f` is either a pointwise (double, double) -> double callable or a
/// GridIntegrand.
template <class F>
QuadResult integrate_plane(F&& f, QuadRule rule, PlanePoint center, PlanePoint half_widths) {
  if (!(half_widths.first > 0.0) || !(half_widths.second > 0.0))
    throw std::invalid_argument("integrate_plane: invalid window");
  rule.validate();
  const auto side = [&](int level) {
    const std::size_t per_panel =
        rule.kind == QuadKind::gauss_legendre_composite ? rule.nodes_per_panel : 1;
    return (static_cast<std::size_t>(rule.panels) << level) * per_panel + 1;
  };
  int levels = 1;
  while (levels < rule.max_levels && side(levels) * side(levels) <= kMaxPlaneNodes) ++levels;
  rule.max_levels = levels;
  ReferenceRule storage;
  const ReferenceRule& ref = detail::reference_for(rule, storage);
  std::vector<double> values;
  std::vector<double> rows;
  return detail::refine(rule, [&](int panels) {
    const auto ax = detail::axis_nodes(rule, ref, panels, center.first - half_widths.first,
                                       center.first + half_widths.first);
    const auto ay = detail::axis_nodes(rule, ref, panels, center.second - half_widths.second,
                                       center.second + half_widths.second);
    const std::size_t nx = ax.x.size();
    const std::size_t ny = ay.x.size();
    values.resize(nx * ny);
    auto fill_row = [&] {
      if constexpr (GridIntegrand<std::remove_cvref_t<F>>) {
        return f.bind(std::span<const double>(ax.x), std::span<const double>(ay.x));
      } else {
        return [&](std::size_t i, std::span<double> out) {
          for (std::size_t j = 0; j < ny; ++j) out[j] = f(ax.x[i], ay.x[j]);
        };
      }
    }();
    // Each row is reduced on its own, then rows are reduced in order.
    detail::parallel_fill(rows, nx, rule.threads, [&](std::size_t i) {
      std::span<double> row(values.data() + i * ny, ny);
      fill_row(i, row);
      for (std::size_t j = 0; j < ny; ++j) {
        if (!std::isfinite(row[j])) throw NonFiniteError("integrate_plane", ax.x[i]);
        row[j] *= ay.w[j];
      }
      return ax.w[i] * detail::pairwise_sum(row);
    });
    return detail::pairwise_sum(rows);
  });
}

}  // namespace epi
