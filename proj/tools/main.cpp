// Command-line front end: evaluate risk measures, solve the constrained
// portfolio problems, validate model files, and run the bounded-risk /
// divergent-norm demonstration.
//
// Exit codes: 0 success, 2 validation failure, 3 numeric failure,
// 4 infeasible problem, 5 solver did not converge.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "condrisk/condrisk.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitInfeasible = 4;
constexpr int kExitNoConvergence = 5;

using nlohmann::ordered_json;
using namespace condrisk;

class Timer {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

// Wall time goes to stdout only; the machine-readable report must be
// byte-identical across runs with equal inputs and seed.
void write_report(const std::string& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  out << doc.dump(2) << "\n";
}

ordered_json meta_json(const char* command, const ModelFile* mf, const std::string& model_path) {
  ordered_json j;
  j["command"] = command;
  if (mf) {
    j["model"] = std::filesystem::path(model_path).filename().string();
    j["input_digest"] = fnv1a_hex(mf->raw);
  }
  return j;
}

std::ostream& value_format(std::ostream& os) { return os << std::setprecision(12); }

struct EvalArgs {
  std::string model, out;
  std::vector<double> x;
  double gamma = 1.0, beta = 1.0;
};

int run_eval(const EvalArgs& args) {
  const Timer timer;
  const ModelFile mf = load_model(args.model);
  const FiniteSpace& sp = mf.space;
  const Partition& F = mf.partition;
  detail::require(args.x.size() == sp.outcome_count(),
                  "--x must supply exactly one value per outcome (" +
                      std::to_string(sp.outcome_count()) + " expected)");
  const RandomVariable x{args.x};
  const RiskAversion gamma(F, args.gamma), beta(F, args.beta);

  const ConditionalValue mean = cond_expect(sp, F, x);
  const ConditionalValue var = cond_variance(sp, F, x);
  const ConditionalValue rho = entropic(sp, F, x, gamma);
  const RandomVariable rho_grad = entropic_gradient(sp, F, x, gamma);
  const ConditionalValue u = mean_variance(sp, F, x, beta);
  const ConditionalValue k = solve_kx(sp, F, x, beta);
  const ConditionalValue v = mmv(sp, F, x, beta);
  const RandomVariable v_grad = mmv_gradient(sp, F, x, beta);
  const std::vector<bool> mono = in_monotonicity_domain(sp, F, x, beta);

  std::cout << value_format << "eval: gamma = " << args.gamma << ", beta = " << args.beta << "\n"
            << std::setw(4) << "atom" << std::setw(20) << "mean" << std::setw(20) << "variance"
            << std::setw(20) << "entropic" << std::setw(20) << "mean-var" << std::setw(20) << "mmv"
            << std::setw(20) << "k" << "\n";
  for (std::size_t a = 0; a < F.atom_count(); ++a)
    std::cout << std::setw(4) << a << std::setw(20) << mean[a] << std::setw(20) << var[a]
              << std::setw(20) << rho[a] << std::setw(20) << u[a] << std::setw(20) << v[a]
              << std::setw(20) << k[a] << (mono[a] ? "  (monotone domain)" : "") << "\n";
  std::cout << "wall time: " << timer.ms() << " ms\n";

  if (!args.out.empty()) {
    ordered_json j = meta_json("eval", &mf, args.model);
    j["parameters"] = {{"gamma", args.gamma}, {"beta", args.beta}};
    j["x"] = args.x;
    j["results"]["cond_mean"] = mean.values;
    j["results"]["cond_variance"] = var.values;
    j["results"]["entropic"] = rho.values;
    j["results"]["entropic_gradient"] = rho_grad.values;
    j["results"]["mean_variance"] = u.values;
    j["results"]["truncation_level"] = k.values;
    j["results"]["monotone_mean_variance"] = v.values;
    j["results"]["mmv_gradient"] = v_grad.values;
    j["results"]["in_monotonicity_domain"] = std::vector<bool>(mono);
    write_report(args.out, j);
  }
  return 0;
}

struct SolveArgs {
  std::string model, problem, out;
  double beta = 1.0, gamma = 1.0, w = 1.0, r = 10.0, p = 2.0;
  SolveOptions opts;
};

int run_solve(const SolveArgs& args) {
  const Timer timer;
  const ModelFile mf = load_model(args.model);
  const MarketModel market = mf.make_market();
  const Partition& F = mf.partition;
  ordered_json j = meta_json("solve", &mf, args.model);

  if (args.problem == "mmv") {
    const RiskAversion beta(F, args.beta);
    const MMVSolution sol = solve_mmv(market, beta, args.opts);
    std::cout << value_format << "solve mmv: beta = " << args.beta << "\n"
              << std::setw(4) << "atom" << std::setw(20) << "value" << std::setw(20) << "k"
              << std::setw(20) << "price-resid" << std::setw(12) << "iterations" << "\n";
    for (std::size_t a = 0; a < F.atom_count(); ++a)
      std::cout << std::setw(4) << a << std::setw(20) << sol.value[a] << std::setw(20)
                << sol.k_star[a] << std::setw(20) << sol.price_residual[a] << std::setw(12)
                << sol.iterations[a] << "\n";
    std::cout << "certificate residual: " << sol.certificate_residual << "\n"
              << "converged: " << (sol.converged ? "yes" : "no") << "\n"
              << "wall time: " << timer.ms() << " ms\n";
    if (!sol.converged) {
      std::cerr << "solve mmv: not converged within " << args.opts.max_iter << " iterations\n";
      return kExitNoConvergence;
    }
    const PricingKernel kernel = pricing_kernel(market, beta, sol.x_star);

    j["parameters"] = {{"problem", "mmv"},       {"beta", args.beta},
                       {"tol", args.opts.tol},   {"max_iter", args.opts.max_iter},
                       {"seed", args.opts.seed}};
    j["results"]["value"] = sol.value.values;
    j["results"]["x_star"] = sol.x_star.values;
    ordered_json alpha = ordered_json::array();
    for (const auto& row : sol.alpha_star.alpha) alpha.push_back(row.values);
    j["results"]["alpha_star"] = alpha;
    j["results"]["truncation_level"] = sol.k_star.values;
    j["results"]["price_residual"] = sol.price_residual.values;
    j["results"]["certificate_residual"] = sol.certificate_residual;
    j["results"]["iterations"] = sol.iterations;
    j["results"]["converged"] = sol.converged;
    j["results"]["kernel_gradient"] = kernel.gradient.values;
    j["results"]["kernel_riesz"] = kernel.riesz.values;
  } else if (args.problem == "entropic") {
    const RiskAversion gamma(F, args.gamma);
    EntropicProblemSpec prob{ConditionalValue(F.atom_count(), args.w),
                             ConditionalValue(F.atom_count(), args.r), args.p};
    const EntropicSolution sol = solve_entropic(market, gamma, prob, args.opts);
    std::cout << value_format << "solve entropic: gamma = " << args.gamma << ", w = " << args.w
              << ", r = " << args.r << ", p = " << args.p << "\n"
              << std::setw(4) << "atom" << std::setw(20) << "value" << std::setw(20)
              << "price-resid" << std::setw(20) << "mean-resid" << std::setw(20) << "norm-slack"
              << std::setw(12) << "iterations" << "\n";
    for (std::size_t a = 0; a < F.atom_count(); ++a)
      std::cout << std::setw(4) << a << std::setw(20) << sol.value[a] << std::setw(20)
                << sol.price_residual[a] << std::setw(20) << sol.mean_residual[a] << std::setw(20)
                << sol.norm_slack[a] << std::setw(12) << sol.iterations[a] << "\n";
    std::cout << "multi-start agreement: " << sol.starts_agreement << "\n"
              << "converged: " << (sol.converged ? "yes" : "no") << "\n"
              << "wall time: " << timer.ms() << " ms\n";
    if (!sol.converged) {
      std::cerr << "solve entropic: not converged within " << args.opts.max_iter
                << " iterations\n";
      return kExitNoConvergence;
    }

    j["parameters"] = {{"problem", "entropic"}, {"gamma", args.gamma},
                       {"w", args.w},           {"r", args.r},
                       {"p", args.p},           {"tol", args.opts.tol},
                       {"max_iter", args.opts.max_iter}, {"starts", args.opts.starts},
                       {"seed", args.opts.seed}};
    j["results"]["value"] = sol.value.values;
    j["results"]["x_star"] = sol.x_star.values;
    ordered_json alpha = ordered_json::array();
    for (const auto& row : sol.alpha_star.alpha) alpha.push_back(row.values);
    j["results"]["alpha_star"] = alpha;
    j["results"]["price_residual"] = sol.price_residual.values;
    j["results"]["mean_residual"] = sol.mean_residual.values;
    j["results"]["norm_slack"] = sol.norm_slack.values;
    j["results"]["starts_agreement"] = sol.starts_agreement;
    j["results"]["iterations"] = sol.iterations;
    j["results"]["converged"] = sol.converged;
  } else {
    throw std::invalid_argument("unknown problem '" + args.problem + "' (mmv or entropic)");
  }

  if (!args.out.empty()) write_report(args.out, j);
  return 0;
}

struct ValidateArgs {
  std::string model, out;
};

int run_validate(const ValidateArgs& args) {
  const ModelFile mf = load_model(args.model);
  std::cout << value_format << "model: " << args.model << "\n"
            << "outcomes: " << mf.space.outcome_count() << ", atoms: " << mf.partition.atom_count()
            << ", market block: " << (mf.has_market() ? "yes" : "no") << "\n";

  ordered_json j = meta_json("validate", &mf, args.model);
  j["outcomes"] = mf.space.outcome_count();
  j["atoms"] = mf.partition.atom_count();
  j["has_market"] = mf.has_market();
  bool all_ok = true;

  if (mf.has_market()) {
    const MarketModel market = mf.make_market();
    const RiskFreeCheck rf = validate_risk_free(market);
    const IndependenceCheck ind = validate_pricing_independence(market);
    std::cout << std::setw(4) << "atom" << std::setw(18) << "unit-attainable" << std::setw(15)
              << "unit-price>0" << std::setw(21) << "pricing-independent" << "\n";
    for (std::size_t a = 0; a < mf.partition.atom_count(); ++a) {
      std::cout << std::setw(4) << a << std::setw(18) << (rf.unit_attainable[a] ? "ok" : "FAIL")
                << std::setw(15) << (rf.unit_price_positive[a] ? "ok" : "FAIL") << std::setw(21)
                << (ind.independent[a] ? "ok" : "FAIL") << "\n";
      all_ok = all_ok && rf.unit_attainable[a] && rf.unit_price_positive[a] && ind.independent[a];
    }
    j["unit_attainable"] = std::vector<bool>(rf.unit_attainable);
    j["unit_price_positive"] = std::vector<bool>(rf.unit_price_positive);
    j["unit_price"] = rf.unit_price.values;
    j["pricing_independent"] = std::vector<bool>(ind.independent);
    if (ind.zero_price_unit_mean)
      j["zero_price_unit_mean_witness"] = ind.zero_price_unit_mean->values;
  }
  j["ok"] = all_ok;
  if (!args.out.empty()) write_report(args.out, j);
  std::cout << (all_ok ? "all checks passed\n" : "validation FAILED\n");
  return all_ok ? 0 : kExitValidation;
}

struct DemoArgs {
  std::string out;
  double beta = 1.0, gamma = 1.0, p = 2.0;
  int n_max = 8;
  std::size_t cells = 2000;
};

int run_demo(const DemoArgs& args) {
  const Timer timer;
  detail::require(args.n_max >= 1, "--n-max must be at least 1");
  truncation_certificate(1, args.beta);  // reject uncovered beta up front

  std::cout << value_format << "heavy-tail family: p = " << args.p << ", gamma = " << args.gamma
            << ", beta = " << args.beta << "\n"
            << std::setw(4) << "n" << std::setw(20) << "coeff" << std::setw(20) << "moment-bound"
            << std::setw(20) << "entropic-risk" << std::setw(20) << "mmv-risk" << std::setw(20)
            << "k" << "  case\n";
  ordered_json rows = ordered_json::array();
  double max_ent = 0.0, max_mmv = 0.0;
  for (int n = 1; n <= args.n_max; ++n) {
    const EntropicTailCertificate ec = entropic_tail_certificate(n, args.p, args.gamma);
    const TruncationReport tr = truncation_certificate(n, args.beta);
    max_ent = std::max(max_ent, std::fabs(ec.risk));
    max_mmv = std::max(max_mmv, std::fabs(tr.risk));
    std::cout << std::setw(4) << n << std::setw(20) << tail_coefficient(n, args.p) << std::setw(20)
              << ec.moment_lower_bound << std::setw(20) << ec.risk << std::setw(20) << tr.risk
              << std::setw(20) << tr.k << "  " << to_string(tr.case_id)
              << (tr.side_conditions_hold ? "" : " (outside case validity)") << "\n";
    ordered_json row;
    row["n"] = n;
    row["tail_coefficient"] = tail_coefficient(n, args.p);
    row["moment_lower_bound"] = ec.moment_lower_bound;
    row["entropic_mean"] = ec.mean;
    row["entropic_risk"] = ec.risk;
    row["mmv_risk"] = tr.risk;
    row["truncation_level"] = tr.k;
    row["case"] = to_string(tr.case_id);
    row["closed_form_valid"] = tr.side_conditions_hold;
    rows.push_back(row);
  }

  // discretized cross-check plus the dual-element degeneracy check: the mmv
  // gradient must be a valid dual direction even when the truncation level is
  // so low that it only touches the loss region
  const int n_check = std::min(3, args.n_max);
  const int n_valid = truncation_min_valid_n(args.beta);
  // the truncation closed forms belong to the p = 2 family, so the
  // discretized cross-check always uses that exponent
  const Discretization disc =
      discretize_unit_interval(args.cells, std::max(n_check, n_valid), 2.0);
  const Partition trivial = Partition::trivial(disc.space.outcome_count());
  const RiskAversion beta(trivial, args.beta);
  const RiskAversion gamma(trivial, args.gamma);
  const double mmv_disc = mmv(disc.space, trivial, disc.payoff, beta)[0];
  const double mmv_closed = truncation_certificate(std::max(n_check, n_valid), args.beta).risk;
  const double ent_disc = entropic(disc.space, trivial, disc.payoff, gamma)[0];
  const double ent_closed =
      entropic_tail_certificate(std::max(n_check, n_valid), 2.0, args.gamma).risk;
  const RandomVariable z = mmv_gradient(disc.space, trivial, disc.payoff, beta);
  const double dual_mean_defect = std::fabs(cond_expect(disc.space, trivial, z)[0] + 1.0);
  double dual_pos = 0.0;
  for (double v : z.values) dual_pos = std::max(dual_pos, v);

  std::cout << "discretization (" << args.cells << " cells, n = " << std::max(n_check, n_valid)
            << "): |mmv - closed form| = " << std::fabs(mmv_disc - mmv_closed)
            << ", |entropic - closed form| = " << std::fabs(ent_disc - ent_closed) << "\n"
            << "dual check on gradient: max positive part = " << dual_pos
            << ", |E[z|F] + 1| = " << dual_mean_defect << "\n"
            << "verdict: risk bounded (max |entropic| = " << max_ent << ", max |mmv| = " << max_mmv
            << "), moment lower bound divergent\n"
            << "wall time: " << timer.ms() << " ms\n";

  if (!args.out.empty()) {
    ordered_json j = meta_json("demo", nullptr, "");
    j["parameters"] = {{"beta", args.beta}, {"gamma", args.gamma},   {"p", args.p},
                       {"n_max", args.n_max}, {"cells", args.cells}};
    j["rows"] = rows;
    j["discretization"] = {{"cells", args.cells},
                           {"n", std::max(n_check, n_valid)},
                           {"mmv_abs_error", std::fabs(mmv_disc - mmv_closed)},
                           {"entropic_abs_error", std::fabs(ent_disc - ent_closed)},
                           {"dual_mean_defect", dual_mean_defect},
                           {"dual_max_positive_part", dual_pos}};
    j["verdict"] = {{"max_abs_entropic_risk", max_ent},
                    {"max_abs_mmv_risk", max_mmv},
                    {"moment_bound_first", tail_moment_lower_bound(1, args.p)},
                    {"moment_bound_last", tail_moment_lower_bound(args.n_max, args.p)},
                    {"min_closed_form_n", n_valid}};
    write_report(args.out, j);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional risk measures on finite probability spaces"};
  app.require_subcommand(1);

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate risk measures for a payoff");
  eval->add_option("--model", eval_args.model, "model file (JSON)")->required();
  eval->add_option("--x", eval_args.x, "payoff, one value per outcome")
      ->delimiter(',')
      ->required();
  eval->add_option("--gamma", eval_args.gamma, "entropic risk aversion");
  eval->add_option("--beta", eval_args.beta, "mean-variance risk aversion");
  eval->add_option("--out", eval_args.out, "write machine-readable report here");

  SolveArgs solve_args;
  CLI::App* solve = app.add_subcommand("solve", "solve a constrained portfolio problem");
  solve->add_option("--model", solve_args.model, "model file (JSON) with market block")
      ->required();
  solve->add_option("--problem", solve_args.problem, "mmv or entropic")->required();
  solve->add_option("--beta", solve_args.beta, "mean-variance risk aversion");
  solve->add_option("--gamma", solve_args.gamma, "entropic risk aversion");
  solve->add_option("--w", solve_args.w, "target conditional mean (entropic)");
  solve->add_option("--r", solve_args.r, "conditional norm budget (entropic)");
  solve->add_option("--p", solve_args.p, "norm exponent in (1, infinity) (entropic)");
  solve->add_option("--tol", solve_args.opts.tol, "projected-gradient tolerance");
  solve->add_option("--max-iter", solve_args.opts.max_iter, "iteration cap per atom");
  solve->add_option("--starts", solve_args.opts.starts, "multi-start count (entropic)");
  solve->add_option("--seed", solve_args.opts.seed, "random seed for multi-start");
  solve->add_option("--out", solve_args.out, "write machine-readable report here");

  ValidateArgs validate_args;
  CLI::App* validate = app.add_subcommand("validate", "check a model file and its market");
  validate->add_option("--model", validate_args.model, "model file (JSON)")->required();
  validate->add_option("--out", validate_args.out, "write machine-readable report here");

  DemoArgs demo_args;
  CLI::App* demo = app.add_subcommand(
      "demo", "bounded risk with divergent norms: the heavy-tail family");
  demo->add_option("--beta", demo_args.beta, "mean-variance risk aversion");
  demo->add_option("--gamma", demo_args.gamma, "entropic risk aversion");
  demo->add_option("--p", demo_args.p, "norm exponent of the family");
  demo->add_option("--n-max", demo_args.n_max, "largest family index");
  demo->add_option("--cells", demo_args.cells, "discretization cells");
  demo->add_option("--out", demo_args.out, "write machine-readable report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (eval->parsed()) return run_eval(eval_args);
    if (solve->parsed()) return run_solve(solve_args);
    if (validate->parsed()) return run_validate(validate_args);
    return run_demo(demo_args);
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
