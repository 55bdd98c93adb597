#include "bilevel/experiment/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace bilevel {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& what) { throw ContractViolation(key + ": " + what); }

double as_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "expected a number, got '" + v + "'");
  return out;
}

long long as_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "expected a nonnegative integer, got '" + v + "'");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "expected true or false, got '" + v + "'");
}

double positive(const std::string& key, const std::string& v) {
  const double d = as_double(key, v);
  if (!(d > 0.0)) throw ContractViolation(key + " must be positive");
  return d;
}

double nonnegative(const std::string& key, const std::string& v) {
  const double d = as_double(key, v);
  if (!(d >= 0.0)) throw ContractViolation(key + " must be >= 0");
  return d;
}

long long at_least(const std::string& key, const std::string& v, long long lo) {
  const long long n = as_int(key, v);
  if (n < lo) throw ContractViolation(key + " must be >= " + std::to_string(lo));
  return n;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"variant", [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.solver.variant = parse_variant(v);
         } catch (const ContractViolation&) {
           bad(k, "expected biadam or vr-biadam, got '" + v + "'");
         }
       }},
      {"task", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "quadratic") c.task = TaskKind::Quadratic;
         else if (v == "hypercleaning") c.task = TaskKind::HyperCleaning;
         else bad(k, "expected quadratic or hypercleaning, got '" + v + "'");
       }},
      {"T", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.T = at_least(k, v, 0); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.seed = as_u64(k, v); }},
      {"repeats", [](RunConfig& c, const std::string& k, const std::string& v) { c.repeats = static_cast<int>(at_least(k, v, 1)); }},
      {"gamma", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.gamma = positive(k, v); }},
      {"lambda", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.lambda = positive(k, v); }},
      {"k", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.k = positive(k, v); }},
      {"m", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.solver.m = as_double(k, v);
         if (!(c.solver.m >= 1.0)) throw ContractViolation("m must be >= 1");
       }},
      {"c1", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.c1 = positive(k, v); }},
      {"c2", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.c2 = positive(k, v); }},
      {"K", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "auto") c.solver.K.reset();
         else c.solver.K = static_cast<int>(at_least(k, v, 1));
       }},
      {"theta", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "auto") c.solver.theta.reset();
         else c.solver.theta = positive(k, v);
       }},
      {"outer_adaptive", [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.solver.outer_kind = parse_adaptive_kind(v);
         } catch (const ContractViolation&) {
           bad(k, "expected adam, adabelief or identity, got '" + v + "'");
         }
         if (c.solver.outer_kind == AdaptiveKind::Norm) bad(k, "norm is only defined for the inner matrix");
       }},
      {"inner_adaptive", [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.solver.inner_kind = parse_adaptive_kind(v);
         } catch (const ContractViolation&) {
           bad(k, "expected norm, adabelief or identity, got '" + v + "'");
         }
         if (c.solver.inner_kind == AdaptiveKind::Adam) bad(k, "adam is only defined for the outer matrix");
       }},
      {"outer_matrix_grad", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "partial") c.solver.outer_grad = OuterMatrixGrad::Partial;
         else if (v == "direction") c.solver.outer_grad = OuterMatrixGrad::Direction;
         else bad(k, "expected partial or direction, got '" + v + "'");
       }},
      {"tau", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.solver.tau = as_double(k, v);
         if (!(c.solver.tau > 0.0 && c.solver.tau < 1.0)) throw ContractViolation("tau must lie in (0,1)");
       }},
      {"rho", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.rho = positive(k, v); }},
      {"b_max", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") c.solver.b_max.reset();
         else c.solver.b_max = nonnegative(k, v);
       }},
      {"b_u", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") c.b_u.reset();
         else c.b_u = positive(k, v);
       }},
      {"theory_box", [](RunConfig& c, const std::string& k, const std::string& v) { c.theory_box = as_bool(k, v); }},
      {"record_wall_time", [](RunConfig& c, const std::string& k, const std::string& v) { c.solver.record_wall_time = as_bool(k, v); }},
      {"oracle_budget", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "none") c.oracle_budget.reset();
         else c.oracle_budget = as_u64(k, v);
       }},
      {"out", [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v.empty()) bad(k, "must not be empty");
         c.out = v;
       }},
      {"task_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.task_seed = as_u64(k, v); }},
      {"x1_norm", [](RunConfig& c, const std::string& k, const std::string& v) { c.x1_norm = nonnegative(k, v); }},
      // quadratic
      {"d", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.d = at_least(k, v, 1); }},
      {"p", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.p = at_least(k, v, 1); }},
      {"mu", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.mu = positive(k, v); }},
      {"L_g", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.L_g = positive(k, v); }},
      {"isotropic", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.isotropic = as_bool(k, v); }},
      {"hessian_family", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.quadratic.hessian_family = static_cast<int>(at_least(k, v, 1));
       }},
      {"hessian_spread", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.quadratic.hessian_spread = nonnegative(k, v);
         if (c.quadratic.hessian_spread > 1.0) throw ContractViolation("hessian_spread must be <= 1");
       }},
      {"coupling", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.coupling = nonnegative(k, v); }},
      {"c_reg", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.c_reg = nonnegative(k, v); }},
      {"noise_sigma", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.noise_sigma = nonnegative(k, v); }},
      {"y_radius", [](RunConfig& c, const std::string& k, const std::string& v) { c.quadratic.y_radius = nonnegative(k, v); }},
      // hyper-cleaning
      {"n_train", [](RunConfig& c, const std::string& k, const std::string& v) { c.hypercleaning.n_train = at_least(k, v, 1); }},
      {"n_val", [](RunConfig& c, const std::string& k, const std::string& v) { c.hypercleaning.n_val = at_least(k, v, 1); }},
      {"features", [](RunConfig& c, const std::string& k, const std::string& v) { c.hypercleaning.features = at_least(k, v, 1); }},
      {"separation", [](RunConfig& c, const std::string& k, const std::string& v) { c.hypercleaning.separation = nonnegative(k, v); }},
      {"corruption", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.hypercleaning.corruption = nonnegative(k, v);
         if (!(c.hypercleaning.corruption < 1.0)) throw ContractViolation("corruption must lie in [0,1)");
       }},
      {"C_reg", [](RunConfig& c, const std::string& k, const std::string& v) { c.hypercleaning.C_reg = positive(k, v); }},
      {"batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.hypercleaning.batch = at_least(k, v, 1); }},
      {"train_csv", [](RunConfig& c, const std::string&, const std::string& v) { c.hypercleaning.train_csv = v; }},
      {"val_csv", [](RunConfig& c, const std::string&, const std::string& v) { c.hypercleaning.val_csv = v; }},
  };
  return table;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractViolation("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ContractViolation("unknown key '" + key + "' on line " + std::to_string(lineno));
    it->second(c, key, value);
  }
  if (c.task == TaskKind::Quadratic && !(c.quadratic.mu <= c.quadratic.L_g)) {
    throw ContractViolation("mu must be <= L_g");
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractViolation("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

}  // namespace bilevel
