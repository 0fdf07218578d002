// epi: command-line front end. Reads distribution files and an optional
// key=value config, writes CSV curves and JSON reports.
//
// Exit codes: 0 ok, 1 verification failed, 2 bad input, 3 no convergence.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "epi/channel.hpp"
#include "epi/gauss_mix.hpp"
#include "epi/identities.hpp"
#include "epi/io.hpp"
#include "epi/verify.hpp"

namespace {

using nlohmann::json;

enum Exit { kOk = 0, kVerifyFailed = 1, kBadInput = 2, kNoConvergence = 3 };

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool renormalize = false;
};

struct Args {
  std::vector<std::string> files;
  std::string gamma;
  std::string method;
  std::string suite = "fast";
  double alpha = 0.5;
};

epi::RunConfig resolve(const Common& c) {
  epi::RunConfig cfg = c.config.empty() ? epi::RunConfig{} : epi::load_config(c.config);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.seed) cfg.mc_seed = *c.seed;
  if (c.threads == 0) throw epi::InputError("--threads must be >= 1");
  cfg.quad.threads = c.threads;
  cfg.validate();
  return cfg;
}

/// Main artifact goes to stdout unless an output directory is configured.
void emit(const epi::RunConfig& cfg, const std::string& name, const std::string& content) {
  if (cfg.output_dir.empty()) {
    std::cout << content;
    return;
  }
  std::filesystem::create_directories(cfg.output_dir);
  epi::write_file((std::filesystem::path(cfg.output_dir) / name).string(), content);
}

std::vector<double> gammas(const Args& a, const epi::RunConfig& cfg) {
  return a.gamma.empty() ? cfg.gamma_grid : epi::parse_list(a.gamma, "--gamma");
}

int cmd_mmse(const Args& a, const epi::RunConfig& cfg, bool renorm) {
  const epi::GaussMix gm = epi::load_distribution(a.files.at(0), renorm);
  const std::vector<double> gs = gammas(a, cfg);
  for (double g : gs)
    if (!(g >= 0.0)) throw epi::InputError("--gamma: values must be >= 0");
  epi::Csv csv({"gamma", "mmse", "fisher_output", "one_minus_gamma_mmse"});
  for (double g : gs) {
    const epi::ChannelView ch(gm, g);
    const double m = epi::mmse(ch, cfg.quad).value;
    csv.row({g, m, epi::fisher_output(ch, cfg.quad).value, 1.0 - g * m});
  }
  emit(cfg, "mmse.csv", csv.str());
  return kOk;
}

int cmd_entropy(const Args& a, const epi::RunConfig& cfg, bool renorm) {
  const std::string method = a.method.empty() ? "direct" : a.method;
  if (method != "direct" && method != "immse")
    throw epi::InputError("--method: expected direct or immse");
  const epi::GaussMix gm = epi::load_distribution(a.files.at(0), renorm);
  epi::Report rep;
  rep.command = "entropy";
  rep.inputs = {{"distribution", epi::to_json(gm)}, {"method", method}};
  const epi::Estimate direct = epi::entropy_direct(gm, cfg.quad);
  rep.diagnostic("entropy_direct", direct, cfg.quad.tol1d);
  if (method == "direct") {
    rep.results = {{"entropy", epi::to_json(direct)}};
  } else {
    const epi::Estimate immse = epi::entropy_immse(gm, cfg.quad);
    rep.diagnostic("entropy_immse", immse, cfg.quad.tol1d);
    rep.results = {{"entropy", epi::to_json(immse)},
                   {"direct", epi::to_json(direct)},
                   {"agreement", {{"value", std::abs(immse.value - direct.value)},
                                  {"est_error", immse.est_error + direct.est_error}}}};
  }
  emit(cfg, "entropy.json", epi::dump(rep.to_json()));
  return kOk;
}

epi::LiebInstance instance(const Args& a, bool renorm) {
  if (!(a.alpha >= 0.0 && a.alpha <= 1.0)) throw epi::InputError("--alpha must be in [0,1]");
  return {epi::load_distribution(a.files.at(0), renorm), epi::load_distribution(a.files.at(1), renorm),
          a.alpha};
}

json instance_json(const epi::LiebInstance& inst) {
  return {{"x1", epi::to_json(inst.x1)}, {"x2", epi::to_json(inst.x2)}, {"alpha", inst.alpha}};
}

json deficit_json(const epi::DeficitReport& r) {
  json samples = json::array();
  for (const auto& [g, d] : r.gamma_samples) samples.push_back({g, d});
  return {{"delta", epi::to_json(r.delta)},
          {"direct_gap", epi::to_json(r.direct_gap)},
          {"identity_error", {{"value", r.identity_error},
                              {"est_error", r.delta.est_error + r.direct_gap.est_error}}},
          {"gamma_samples", samples}};
}

int cmd_deficit(const Args& a, const epi::RunConfig& cfg, bool renorm) {
  const epi::LiebInstance inst = instance(a, renorm);
  const epi::DeficitReport r = epi::deficit(inst, cfg.quad);
  epi::Report rep;
  rep.command = "deficit";
  rep.inputs = instance_json(inst);
  rep.results = deficit_json(r);
  rep.diagnostic("deficit_gamma_integral", r.quad);
  rep.diagnostic("lieb_gap_direct", r.direct_gap, cfg.quad.tol1d);
  emit(cfg, "deficit.json", epi::dump(rep.to_json()));
  if (!cfg.output_dir.empty()) {
    epi::Csv csv({"gamma", "integrand"});
    for (const auto& [g, d] : r.gamma_samples) csv.row({g, d});
    emit(cfg, "deficit_gamma.csv", csv.str());
  }
  return kOk;
}

int cmd_diagnose(const Args& a, const epi::RunConfig& cfg, bool renorm) {
  const epi::LiebInstance inst = instance(a, renorm);
  std::vector<double> grid = gammas(a, cfg);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!(grid[i] > 0.0) || (i > 0 && !(grid[i] > grid[i - 1])))
      throw epi::InputError("gamma grid must be positive and increasing");
  const epi::DiagnosticsReport d = epi::diagnose(inst, grid, cfg.quad);
  auto fit = [](const epi::AffineFit& f) {
    return json{{"slope", f.slope},
                {"intercept", f.intercept},
                {"residual", f.residual},
                {"est_error", f.est_error}};
  };
  json rows = json::array();
  for (const epi::DiagnosticsRow& r : d.rows)
    rows.push_back({{"gamma", r.gamma},
                    {"conditional_gap", epi::to_json(r.conditional_gap)},
                    {"towering_condition", epi::to_json(r.towering_condition)},
                    {"score_condition", epi::to_json(r.score_condition)},
                    {"score_form", epi::to_json(r.score_form)},
                    {"fisher_deficit", epi::to_json(r.fisher_deficit)},
                    {"towering_identity", epi::to_json(r.towering_identity)},
                    {"convolution_identity", epi::to_json(r.convolution_identity)},
                    {"affine_x1", fit(r.affine_x1)},
                    {"affine_x2", fit(r.affine_x2)}});
  epi::Report rep;
  rep.command = "diagnose";
  rep.inputs = instance_json(inst);
  rep.inputs["gamma_grid"] = grid;
  rep.results = {{"verdict", d.verdict},
                 {"threshold", epi::kEqualityThreshold},
                 {"rows", rows}};
  if (d.deficit) {
    rep.results["deficit"] = deficit_json(*d.deficit);
    rep.diagnostic("deficit_gamma_integral", d.deficit->quad);
  }
  emit(cfg, "diagnose.json", epi::dump(rep.to_json()));
  return kOk;
}

int cmd_kl(const Args& a, const epi::RunConfig& cfg, bool renorm) {
  const std::string method = a.method.empty() ? "all" : a.method;
  if (method != "direct" && method != "mismatched" && method != "fisher" && method != "all")
    throw epi::InputError("--method: expected direct, mismatched, fisher or all");
  const epi::GaussMix p = epi::load_distribution(a.files.at(0), renorm);
  const epi::GaussMix q = epi::load_distribution(a.files.at(1), renorm);
  epi::Report rep;
  rep.command = "kl";
  rep.inputs = {{"p", epi::to_json(p)}, {"q", epi::to_json(q)}, {"method", method}};
  std::vector<std::pair<std::string, epi::Estimate>> got;
  if (method == "direct" || method == "all") got.emplace_back("direct", epi::kl_direct(p, q, cfg.quad));
  if (method == "mismatched" || method == "all")
    got.emplace_back("mismatched", epi::kl_mismatched(p, q, cfg.quad));
  if (method == "fisher" || method == "all")
    got.emplace_back("fisher", epi::kl_via_fisher(p, q, cfg.quad));
  for (const auto& [name, e] : got) {
    rep.results[name] = epi::to_json(e);
    rep.diagnostic("kl_" + name, e, cfg.quad.tol1d);
  }
  if (got.size() > 1) {
    double lo = got[0].second.value, hi = lo, err = 0.0;
    for (const auto& [name, e] : got) {
      lo = std::min(lo, e.value);
      hi = std::max(hi, e.value);
      err += e.est_error;
    }
    rep.results["max_relative_spread"] = {
        {"value", (hi - lo) / std::max(std::abs(hi), 1e-300)},
        {"est_error", err / std::max(std::abs(hi), 1e-300)}};
  }
  emit(cfg, "kl.json", epi::dump(rep.to_json()));
  return kOk;
}

int cmd_verify(const Args& a, const epi::RunConfig& cfg) {
  const epi::VerifySummary v = epi::run_verify(a.suite, cfg);
  emit(cfg, "verify.json", epi::dump(v.to_json(cfg)));
  if (!v.passed()) {
    std::size_t shown = 0;
    for (const epi::Check& c : v.checks) {
      if (c.passed || shown++ == 10) continue;
      std::fprintf(stderr, "FAIL %s: residual %s, threshold %s%s%s\n", c.name.c_str(),
                   epi::format_number(c.residual).c_str(), epi::format_number(c.threshold).c_str(),
                   c.detail.empty() ? "" : ", ", c.detail.c_str());
    }
    std::fprintf(stderr, "%zu of %zu checks failed\n", v.failures(), v.checks.size());
    return kVerifyFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-mixture information-estimation toolkit"};
  app.require_subcommand(1);
  Common common;
  Args args;

  app.add_option("--config", common.config, "key=value configuration file");
  app.add_option("--out", common.out, "directory for output files (default: stdout)");
  app.add_option("--seed", common.seed, "Monte Carlo seed (overrides mc.seed)");
  app.add_option("--threads", common.threads, "threads for node evaluation")->capture_default_str();
  app.add_flag("--renormalize", common.renormalize, "rescale weights that do not sum to 1");

  auto files = [&](CLI::App* sub, std::size_t n, const char* what) {
    sub->add_option("files", args.files, what)->required()->expected(static_cast<int>(n))->check(CLI::ExistingFile);
  };
  auto* mmse = app.add_subcommand("mmse", "MMSE and output Fisher information over SNR");
  files(mmse, 1, "distribution file");
  mmse->add_option("--gamma", args.gamma, "comma-separated SNR values (default: gamma.grid)");

  auto* entropy = app.add_subcommand("entropy", "differential entropy in nats");
  files(entropy, 1, "distribution file");
  entropy->add_option("--method", args.method, "direct or immse");

  auto* deficit = app.add_subcommand("deficit", "Lieb deficit as an SNR integral");
  files(deficit, 2, "X1 and X2 distribution files");
  deficit->add_option("--alpha", args.alpha, "mixing weight in [0,1]")->capture_default_str();

  auto* diagnose = app.add_subcommand("diagnose", "equality-condition residuals on the SNR grid");
  files(diagnose, 2, "X1 and X2 distribution files");
  diagnose->add_option("--alpha", args.alpha, "mixing weight in [0,1]")->capture_default_str();
  diagnose->add_option("--gamma", args.gamma, "comma-separated SNR grid (default: gamma.grid)");

  auto* kl = app.add_subcommand("kl", "relative entropy D(P||Q)");
  files(kl, 2, "P and Q distribution files");
  kl->add_option("--method", args.method, "direct, mismatched, fisher or all");

  auto* verify = app.add_subcommand("verify", "run the self-check suite");
  verify->add_option("--suite", args.suite, "fast or full")->capture_default_str();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadInput;
  }

  try {
    const epi::RunConfig cfg = resolve(common);
    const bool r = common.renormalize;
    if (*mmse) return cmd_mmse(args, cfg, r);
    if (*entropy) return cmd_entropy(args, cfg, r);
    if (*deficit) return cmd_deficit(args, cfg, r);
    if (*diagnose) return cmd_diagnose(args, cfg, r);
    if (*kl) return cmd_kl(args, cfg, r);
    if (*verify) return cmd_verify(args, cfg);
  } catch (const epi::ConvergenceError& e) {
    const epi::QuadResult& q = e.result();
    std::fprintf(stderr, "error: %s (last %s, previous %s)\n", e.what(),
                 epi::format_number(q.value).c_str(), epi::format_number(q.previous).c_str());
    return kNoConvergence;
  } catch (const epi::NonFiniteError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNoConvergence;
  } catch (const epi::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const std::domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  }
  return kBadInput;
}
