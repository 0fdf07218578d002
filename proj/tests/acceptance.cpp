// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "epi/channel.hpp"
#include "epi/gauss_mix.hpp"
#include "epi/identities.hpp"
#include "epi/verify.hpp"
#include "oracles.hpp"

namespace {

using epi::GaussMix;
using epi::LiebInstance;

struct Outcome {
  bool pass = true;
  std::string worst;
  double worst_ratio = 0.0;

  // Records `value` against an upper bound; keeps the tightest miss for the report.
  void at_most(const std::string& what, double value, double bound) {
    const double ratio = std::isfinite(value) ? value / bound : INFINITY;
    if (!(value <= bound)) pass = false;
    if (ratio >= worst_ratio) {
      worst_ratio = ratio;
      std::ostringstream ss;
      ss << what << " " << value << " vs <= " << bound;
      worst = ss.str();
    }
  }
  void at_least(const std::string& what, double value, double bound) {
    if (!(value >= bound)) {
      pass = false;
      worst_ratio = INFINITY;
      std::ostringstream ss;
      ss << what << " " << value << " vs >= " << bound;
      worst = ss.str();
    }
  }
};

std::vector<LiebInstance> random_instances(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  const std::array<double, 3> alphas{0.25, 0.5, 0.8};
  std::vector<LiebInstance> out;
  for (int i = 0; i < n; ++i) {
    GaussMix a = epi::random_mixture(rng, 3);
    GaussMix b = epi::random_mixture(rng, 3);
    out.emplace_back(std::move(a), std::move(b), alphas[i % 3]);
  }
  return out;
}

const std::vector<double> kGrid{0.1, 0.5, 1.0, 2.0, 5.0};

Outcome deficit_matches_gap() {
  Outcome o;
  int i = 0;
  for (const LiebInstance& inst : random_instances(101, 12)) {
    const epi::DeficitReport r = epi::deficit(inst);
    o.at_most("instance " + std::to_string(i++), r.identity_error, 1e-4 * (1.0 + std::abs(r.direct_gap.value)));
  }
  return o;
}

Outcome immse_entropy() {
  Outcome o;
  for (double v : {0.25, 1.0, 4.0, 9.0}) {
    const GaussMix gm = GaussMix::gaussian(0.7, v);
    const double closed = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * v);
    o.at_most("gaussian var " + std::to_string(v), std::abs(epi::entropy_immse(gm).value - closed), 1e-5);
    o.at_most("gaussian direct var " + std::to_string(v), std::abs(epi::entropy_direct(gm).value - closed), 1e-5);
  }
  std::mt19937_64 rng(202);
  for (int i = 0; i < 8; ++i) {
    const GaussMix gm = epi::random_mixture(rng, 3);
    const double direct = epi::entropy_direct(gm).value;
    o.at_most("mixture " + std::to_string(i), std::abs(epi::entropy_immse(gm).value - direct), 1e-4);
    o.at_most("mixture oracle " + std::to_string(i), std::abs(direct - oracle::entropy(gm)), 1e-4);
  }
  return o;
}

Outcome equality_cases() {
  Outcome o;
  const std::vector<LiebInstance> equal{
      {GaussMix::gaussian(0.0, 1.0), GaussMix::gaussian(0.0, 1.0), 0.5},
      {GaussMix::gaussian(-1.0, 2.0), GaussMix::gaussian(3.0, 2.0), 0.3},
      {GaussMix::gaussian(0.5, 0.25), GaussMix::gaussian(0.5, 0.25), 0.8},
      {GaussMix::gaussian(2.0, 4.0), GaussMix::gaussian(-2.0, 4.0), 0.5},
      {GaussMix::gaussian(0.0, 0.5), GaussMix::gaussian(1.0, 0.5), 0.1},
  };
  const std::vector<LiebInstance> strict{
      {GaussMix::gaussian(0.0, 1.0), GaussMix::gaussian(0.0, 4.0), 0.5},
      {GaussMix::gaussian(0.0, 0.5), GaussMix::gaussian(1.0, 2.0), 0.3},
      {GaussMix({0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5}), GaussMix::gaussian(0.0, 1.0), 0.5},
      {GaussMix({0.5, 0.5}, {-2.0, 2.0}, {0.2, 0.2}), GaussMix({0.5, 0.5}, {-2.0, 2.0}, {0.2, 0.2}), 0.5},
      {GaussMix({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6}), GaussMix::gaussian(0.0, 1.0), 0.8},
  };
  for (std::size_t i = 0; i < equal.size(); ++i) {
    const std::string id = "equal " + std::to_string(i);
    o.at_most(id + " delta", std::abs(epi::deficit(equal[i]).delta.value), 1e-7);
    for (double g : kGrid) {
      o.at_most(id + " conditional gap", epi::conditional_gap(equal[i], g).value, 1e-6);
      o.at_most(id + " score form", epi::score_convolution_residual(equal[i], g).condition.value, 1e-6);
      o.at_most(id + " fisher deficit", std::abs(epi::fisher_deficit(equal[i], g).value), 1e-6);
    }
  }
  for (std::size_t i = 0; i < strict.size(); ++i)
    o.at_least("strict " + std::to_string(i) + " delta", epi::deficit(strict[i]).delta.value, 1e-4);
  return o;
}

Outcome spot_values() {
  Outcome o;
  const GaussMix n01 = GaussMix::gaussian(0.0, 1.0);
  o.at_most("mmse N(0,1) g=1", std::abs(epi::mmse(epi::ChannelView(n01, 1.0)).value - 0.5), 1e-9);
  const std::vector<GaussMix> laws{n01, GaussMix({0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5}),
                                   GaussMix({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6})};
  for (const GaussMix& gm : laws)
    for (double g : kGrid) {
      const epi::ChannelView ch(gm, g);
      o.at_most("fisher identity g=" + std::to_string(g),
                std::abs(epi::fisher_output(ch).value - (1.0 - g * epi::mmse(ch).value)), 1e-7);
    }
  const LiebInstance inst{n01, GaussMix::gaussian(0.0, 4.0), 0.5};
  o.at_most("fisher deficit 9/140", std::abs(epi::fisher_deficit(inst, 1.0).value - 9.0 / 140.0), 1e-6);
  o.at_most("lieb gap ln(1.25)/2", std::abs(epi::lieb_gap_direct(inst).value - 0.5 * std::log(1.25)), 1e-6);
  o.at_most("delta ln(1.25)/2", std::abs(epi::deficit(inst).delta.value - 0.5 * std::log(1.25)), 1e-6);
  return o;
}

Outcome identities_hold() {
  Outcome o;
  const GaussMix bimodal({0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5});
  const GaussMix skewed({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6});
  for (const GaussMix& gm : {bimodal, skewed})
    for (double g : {0.5, 2.0}) {
      const epi::ChannelView ch(gm, g);
      const double var = epi::moments(gm).variance;
      const double a = std::sqrt(g) * var / (1.0 + g * var);
      const std::vector<std::pair<std::string, std::function<double(double)>>> estimators{
          {"posterior mean", [&ch](double y) { return ch.mean(y); }},
          {"zero", [](double) { return 0.0; }},
          {"linear", [a](double y) { return a * y; }},
      };
      for (const auto& [name, f] : estimators) {
        const epi::PenaltyReport r = epi::suboptimal_penalty(ch, f);
        o.at_most("penalty " + name, std::abs(r.mse.value - r.mmse.value - r.penalty.value), 1e-7);
      }
    }
  std::vector<LiebInstance> all = random_instances(303, 4);
  all.emplace_back(GaussMix::gaussian(0.0, 1.0), GaussMix::gaussian(0.0, 4.0), 0.5);
  all.emplace_back(bimodal, skewed, 0.3);
  for (std::size_t i = 0; i < all.size(); ++i)
    for (double g : {0.5, 2.0}) {
      const std::string id = " instance " + std::to_string(i);
      o.at_most("towering" + id, epi::towering_residual(all[i], g).value, 1e-7);
      o.at_most("convolution" + id, epi::score_convolution_residual(all[i], g).identity.value, 1e-7);
    }
  return o;
}

Outcome affinity() {
  Outcome o;
  for (double v : {0.5, 1.0, 3.0})
    for (double g : {0.5, 2.0}) {
      const epi::AffineFit f = epi::affinity_diagnostic(epi::ChannelView(GaussMix::gaussian(1.0, v), g));
      o.at_most("gaussian residual", f.residual, 1e-9);
      o.at_most("gaussian slope", std::abs(f.slope - std::sqrt(g) * v / (1.0 + g * v)), 1e-9);
    }
  for (double d : {1.5, 2.0, 3.0}) {
    const GaussMix sep({0.5, 0.5}, {-d, d}, {0.2, 0.2});
    o.at_least("separated residual", epi::affinity_diagnostic(epi::ChannelView(sep, 1.0)).residual, 1e-4);
  }
  return o;
}

Outcome kl_three_ways() {
  Outcome o;
  const GaussMix n01 = GaussMix::gaussian(0.0, 1.0);
  const GaussMix bimodal({0.5, 0.5}, {-1.0, 1.0}, {0.5, 0.5});
  const GaussMix skewed({0.2, 0.5, 0.3}, {-1.5, 0.0, 2.0}, {0.4, 1.0, 0.6});
  const std::vector<std::pair<GaussMix, GaussMix>> pairs{
      {GaussMix::gaussian(1.0, 1.0), n01}, {bimodal, GaussMix::gaussian(0.0, 2.0)}, {skewed, n01},
      {n01, bimodal},                      {bimodal, skewed},                       {GaussMix::gaussian(0.5, 2.0), skewed}};
  o.at_most("closed form 0.5", std::abs(epi::kl_direct(pairs[0].first, pairs[0].second).value - 0.5), 1e-3 * 0.5);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [p, q] = pairs[i];
    const double d = epi::kl_direct(p, q).value;
    const double m = epi::kl_mismatched(p, q).value;
    const double f = epi::kl_via_fisher(p, q).value;
    const std::string id = "pair " + std::to_string(i);
    o.at_most(id + " mismatched", std::abs(m - d) / std::abs(d), 1e-3);
    o.at_most(id + " fisher", std::abs(f - d) / std::abs(d), 1e-3);
  }
  return o;
}

std::pair<int, std::string> capture(const std::string& cmd) {
  FILE* p = popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!p) return {-1, {}};
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) out.append(buf.data(), n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

Outcome cli_verify() {
  Outcome o;
  const auto [c1, out1] = capture(std::string(EPI_CLI) + " verify --suite fast --threads 1");
  const auto [c2, out2] = capture(std::string(EPI_CLI) + " verify --suite fast --threads 3");
  o.at_most("exit code (threads 1)", c1, 0);
  o.at_most("exit code (threads 3)", c2, 0);
  nlohmann::json j1 = nlohmann::json::parse(out1, nullptr, false);
  nlohmann::json j2 = nlohmann::json::parse(out2, nullptr, false);
  if (j1.is_discarded() || j2.is_discarded()) {
    o.at_least("parsable JSON", 0.0, 1.0);
    return o;
  }
  j1.erase("version");
  j2.erase("version");
  o.at_most("JSON differs", j1.dump() == j2.dump() ? 0.0 : 1.0, 0.0);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"deficit integral matches the direct entropy gap on 12 random instances", deficit_matches_gap},
      {"I-MMSE entropy matches closed form and dense quadrature", immse_entropy},
      {"equality instances vanish, strict instances stay positive", equality_cases},
      {"MMSE, Fisher identity, 9/140 and ln(1.25)/2 spot values", spot_values},
      {"penalty decomposition, towering and score convolution identities", identities_hold},
      {"conditional mean affine for Gaussian inputs, nonlinear for separated bimodals", affinity},
      {"relative entropy agrees across three methods", kl_three_ways},
      {"CLI fast self-check passes and is thread-count invariant", cli_verify},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.worst = std::string("exception: ") + e.what();
    }
    if (o.worst.empty()) o.worst = "all checks exact";
    if (!o.pass) ++failed;
    std::printf("[%s] %zu %s (%s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.worst.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
