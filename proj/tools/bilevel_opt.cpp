#include "bilevel/experiment/runner.hpp"

#include <CLI11.hpp>

#include <fmt/format.h>

#include <fstream>
#include <iostream>

namespace {

std::vector<int> parse_K_list(const std::string& spec) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const std::string item = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const auto dots = item.find("..");
    try {
      if (dots != std::string::npos) {
        const int lo = std::stoi(item.substr(0, dots));
        const int hi = std::stoi(item.substr(dots + 2));
        if (lo < 1 || hi < lo) throw std::invalid_argument("range");
        for (int k = lo; k <= hi; ++k) out.push_back(k);
      } else {
        const int k = std::stoi(item);
        if (k < 1) throw std::invalid_argument("K");
        out.push_back(k);
      }
    } catch (const std::exception&) {
      throw std::invalid_argument("--K: expected a list like 1..20 or 1,2,5, got '" + spec + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int cmd_run(const std::string& path, const std::string& out, bool enforce) {
  const bilevel::RunConfig cfg = bilevel::load_config(path);
  const auto res = bilevel::run_experiment(cfg, out.empty() ? cfg.out : out, enforce);
  for (const auto& s : res.seeds) {
    std::cout << "seed " << s.seed << ": " << s.status;
    if (s.mean_metric_m) std::cout << ", mean metric_m " << bilevel::format_double(*s.mean_metric_m);
    if (s.final_objective) std::cout << ", final objective " << bilevel::format_double(*s.final_objective);
    if (!s.message.empty()) std::cout << " (" << s.message << ")";
    std::cout << '\n';
  }
  return res.exit_status;
}

int cmd_bias_scan(const std::string& path, const std::string& Ks, const std::string& out) {
  const bilevel::RunConfig cfg = bilevel::load_config(path);
  const auto rows = bilevel::bias_scan(cfg, parse_K_list(Ks));
  if (out.empty()) {
    bilevel::write_bias_scan(std::cout, rows);
  } else {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + out);
    bilevel::write_bias_scan(f, rows);
  }
  return 0;
}

int cmd_check_params(const std::string& path) {
  const bilevel::RunConfig cfg = bilevel::load_config(path);
  const bilevel::BuiltTask task = bilevel::build_task(cfg);
  const bilevel::SolverConfig s = bilevel::solver_config_for(cfg, task, cfg.solver.seed);
  const auto& c = task.oracles.constants;
  const auto [b_l, b_u] = bilevel::inner_bounds(cfg);
  if (!task.reference.constants_known) {
    std::cout << "warning: this task only knows L_g and mu; the remaining constants are crude bounds\n";
  }
  std::cout << fmt::format("constants: L_f={} L_g={} mu={} C_fy={} C_gxy={} L_gxy={} L_gyy={} sigma={}\n", c.L_f, c.L_g,
                           c.mu, c.C_fy, c.C_gxy, c.L_gxy, c.L_gyy, c.sigma);
  std::cout << fmt::format("run: variant={} T={} K={} theta={} b_l={} b_u={}\n", bilevel::to_string(s.variant), s.T, *s.K,
                           *s.theta, b_l, b_u);
  try {
    const auto dc = bilevel::derived_constants(c, *s.K);
    std::cout << fmt::format("derived: kappa={} L_y={} L={} L0={} L_K={} L1={} L2={}\n", dc.kappa, dc.L_y, dc.L, dc.L0,
                             dc.L_K, dc.L1, dc.L2);
    bilevel::BoxRequest req{s.variant, s.k, s.m, s.rho, b_l, b_u, s.c1, s.c2, s.lambda};
    const auto box = bilevel::theorem_parameter_box(dc, c, req);
    std::cout << fmt::format("box: c1_min={} c2_min={} c_max={} m_min={} lambda_max={} gamma_max={} K_for(T)={}\n",
                             box.c1_min, box.c2_min, box.c_max ? bilevel::format_double(*box.c_max) : "none", box.m_min,
                             box.lambda_max, box.gamma_max, box.K_for(std::max(1L, s.T)));
  } catch (const bilevel::InfeasibleBox& e) {
    std::cout << "box: infeasible (" << e.constraint() << "): " << e.what() << '\n';
  }
  const auto v = bilevel::check_theory(cfg, task);
  if (v.empty()) {
    std::cout << "all theorem conditions hold\n";
    return 0;
  }
  for (const auto& e : v) std::cout << "violation " << e.key << ": " << e.message << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic bilevel optimization experiments"};
  app.require_subcommand(1);

  std::string run_cfg, run_out;
  bool enforce = false;
  auto* run = app.add_subcommand("run", "Run seeded experiments and write CSV traces");
  run->add_option("config", run_cfg, "config file")->required();
  run->add_option("--out", run_out, "output directory (overrides the config's out key)");
  run->add_flag("--enforce-theory", enforce, "reject configurations outside the theorem parameter box");

  std::string scan_cfg, scan_K = "1..20", scan_out;
  auto* scan = app.add_subcommand("bias-scan", "Measured hypergradient bias against its bound");
  scan->add_option("config", scan_cfg, "config file")->required();
  scan->add_option("--K", scan_K, "list of K values, e.g. 1..20 or 1,2,4");
  scan->add_option("--out", scan_out, "CSV file (stdout when omitted)");

  std::string check_cfg;
  auto* check = app.add_subcommand("check-params", "Evaluate the theorem parameter box for a config");
  check->add_option("config", check_cfg, "config file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_cfg, run_out, enforce);
    if (*scan) return cmd_bias_scan(scan_cfg, scan_K, scan_out);
    if (*check) return cmd_check_params(check_cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
