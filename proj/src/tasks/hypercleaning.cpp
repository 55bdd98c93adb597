#include "bilevel/tasks/hypercleaning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace bilevel {

namespace {

constexpr std::uint64_t kSaltBatch = 0x6261746368000001ULL;

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// log(1 + e^u) without overflow.
double softplus(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

std::uint64_t bounded(std::mt19937_64& eng, std::uint64_t n) { return scale_to_range(eng(), n); }

// Rows of a minibatch drawn without replacement; the whole set when batch >= n.
std::vector<Eigen::Index> minibatch(SampleKey key, Eigen::Index n, Eigen::Index batch, bool full) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (full || batch >= n) return idx;
  auto eng = engine_for(SampleKey{splitmix64(key.value ^ kSaltBatch)});
  for (Eigen::Index i = 0; i < batch; ++i) {
    const auto j = i + static_cast<Eigen::Index>(bounded(eng, static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(batch));
  return idx;
}

struct Data {
  Dataset train;
  Dataset val;
  double C = 0.0;
  Eigen::Index batch = 32;
};

ProblemOracles wire(const std::shared_ptr<const Data>& data, bool full) {
  const Dataset& tr = data->train;
  const Dataset& va = data->val;
  ProblemOracles o;
  o.dim_x = tr.n();
  o.dim_y = tr.p();
  o.set_x = ConstraintSet::unconstrained(o.dim_x);
  o.set_y = ConstraintSet::unconstrained(o.dim_y);
  o.deterministic = full || (data->batch >= tr.n() && data->batch >= va.n());

  double max_sq = 0.0;
  for (Eigen::Index i = 0; i < tr.n(); ++i) max_sq = std::max(max_sq, tr.features.row(i).squaredNorm());
  double max_sq_val = 0.0;
  for (Eigen::Index i = 0; i < va.n(); ++i) max_sq_val = std::max(max_sq_val, va.features.row(i).squaredNorm());
  ProblemConstants& c = o.constants;
  c.mu = 2.0 * data->C;
  c.L_g = 0.25 * max_sq + 2.0 * data->C;
  c.L_f = std::max(0.25 * max_sq_val, 1e-12);
  c.C_fy = std::sqrt(max_sq_val);
  c.C_gxy = 0.25 * std::sqrt(max_sq);

  const Eigen::Index B = data->batch;
  o.grad_f_x = [](const Vector& z, const Vector&, SampleKey) -> Vector { return Vector::Zero(z.size()); };
  o.grad_f_y = [data, B, full](const Vector&, const Vector& th, SampleKey k) -> Vector {
    const Dataset& v = data->val;
    const auto rows = minibatch(k, v.n(), B, full);
    Vector out = Vector::Zero(th.size());
    for (const auto i : rows) {
      const double s = sigmoid(v.features.row(i).dot(th));
      out += (s - v.labels[static_cast<std::size_t>(i)]) * v.features.row(i).transpose();
    }
    return out / static_cast<double>(rows.size());
  };
  o.grad_g_y = [data, B, full](const Vector& z, const Vector& th, SampleKey k) -> Vector {
    const Dataset& t = data->train;
    const auto rows = minibatch(k, t.n(), B, full);
    Vector out = Vector::Zero(th.size());
    for (const auto i : rows) {
      const double s = sigmoid(t.features.row(i).dot(th));
      out += sigmoid(z[i]) * (s - t.labels[static_cast<std::size_t>(i)]) * t.features.row(i).transpose();
    }
    return out / static_cast<double>(rows.size()) + 2.0 * data->C * th;
  };
  o.hvp_g_yy = [data, B, full](const Vector& z, const Vector& th, const Vector& v, SampleKey k) -> Vector {
    const Dataset& t = data->train;
    const auto rows = minibatch(k, t.n(), B, full);
    Vector out = Vector::Zero(th.size());
    for (const auto i : rows) {
      const auto a = t.features.row(i);
      const double s = sigmoid(a.dot(th));
      out += sigmoid(z[i]) * s * (1.0 - s) * a.dot(v) * a.transpose();
    }
    return out / static_cast<double>(rows.size()) + 2.0 * data->C * v;
  };
  o.hvp_g_xy = [data, B, full](const Vector& z, const Vector& th, const Vector& v, SampleKey k) -> Vector {
    const Dataset& t = data->train;
    const auto rows = minibatch(k, t.n(), B, full);
    Vector out = Vector::Zero(z.size());
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (const auto i : rows) {
      const auto a = t.features.row(i);
      const double s = sigmoid(a.dot(th));
      const double sz = sigmoid(z[i]);
      out[i] = sz * (1.0 - sz) * (s - t.labels[static_cast<std::size_t>(i)]) * a.dot(v) * inv;
    }
    return out;
  };
  o.validate();
  return o;
}

double mean_logistic(const Dataset& d, const Vector& theta, const Vector* weights) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    const double u = d.features.row(i).dot(theta);
    const double l = softplus(u) - d.labels[static_cast<std::size_t>(i)] * u;
    acc += weights ? sigmoid((*weights)[i]) * l : l;
  }
  return acc / static_cast<double>(d.n());
}

}  // namespace

void Dataset::validate() const {
  detail::require(features.rows() >= 1 && features.cols() >= 1, "dataset: need at least one row and one feature");
  detail::require(static_cast<Eigen::Index>(labels.size()) == features.rows(), "dataset: label count differs from row count");
  detail::require(features.allFinite(), "dataset: features must be finite");
  for (int b : labels) detail::require(b == 0 || b == 1, "dataset: labels must be 0 or 1");
}

Dataset make_blobs(Eigen::Index n, Eigen::Index p, double separation, std::uint64_t seed) {
  detail::require(n >= 1 && p >= 1, "make_blobs: n and p must be positive");
  std::mt19937_64 eng(splitmix64(seed));
  std::normal_distribution<double> nd(0.0, 1.0);
  const double shift = 0.5 * separation / std::sqrt(static_cast<double>(p));
  Dataset d;
  d.features.resize(n, p);
  d.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int b = static_cast<int>(i % 2);
    d.labels[static_cast<std::size_t>(i)] = b;
    for (Eigen::Index j = 0; j < p; ++j) d.features(i, j) = nd(eng) + (b == 1 ? shift : -shift);
  }
  return d;
}

CorruptedDataset corrupt_labels(const Dataset& d, double fraction, std::uint64_t seed) {
  detail::require(fraction >= 0.0 && fraction < 1.0, "corrupt_labels: fraction must lie in [0,1)");
  d.validate();
  const auto n = static_cast<std::size_t>(d.n());
  const auto flips = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 eng(splitmix64(seed ^ 0x636f727275707421ULL));
  for (std::size_t i = 0; i < flips; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(bounded(eng, n - i));
    std::swap(idx[i], idx[j]);
  }
  CorruptedDataset out{d, std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < flips; ++i) {
    out.mask[idx[i]] = true;
    out.data.labels[idx[i]] = 1 - out.data.labels[idx[i]];
  }
  return out;
}

Dataset parse_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      const auto tail = cell.find_first_not_of(" \t", used);
      if (used == 0 || tail != std::string::npos) {
        throw ContractViolation("csv line " + std::to_string(lineno) + ": cannot parse '" + cell + "' as a number");
      }
      vals.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (vals.size() < 2) throw ContractViolation("csv line " + std::to_string(lineno) + ": need a label and at least one feature");
    if (vals[0] != 0.0 && vals[0] != 1.0) {
      throw ContractViolation("csv line " + std::to_string(lineno) + ": label must be 0 or 1");
    }
    if (width == 0) width = vals.size();
    if (vals.size() != width) {
      throw ContractViolation("csv line " + std::to_string(lineno) + ": expected " + std::to_string(width - 1) +
                              " features, got " + std::to_string(vals.size() - 1));
    }
    labels.push_back(static_cast<int>(vals[0]));
    rows.emplace_back(vals.begin() + 1, vals.end());
  }
  if (rows.empty()) throw ContractViolation("csv: no data rows");
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j + 1 < width; ++j)
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  d.labels = std::move(labels);
  d.validate();
  return d;
}

Dataset load_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractViolation("csv: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

double HyperCleaningTask::inner_loss(const Vector& z, const Vector& theta) const {
  return mean_logistic(train, theta, &z) + C_reg * theta.squaredNorm();
}

double HyperCleaningTask::val_loss(const Vector& theta) const { return mean_logistic(val, theta, nullptr); }

HyperCleaningTask build_hypercleaning(Dataset train, Dataset val, double C_reg, Eigen::Index batch) {
  train.validate();
  val.validate();
  detail::require(train.p() == val.p(), "build_hypercleaning: train and validation feature counts differ");
  detail::require(C_reg > 0.0, "build_hypercleaning: C_reg must be positive");
  detail::require(batch >= 1, "build_hypercleaning: minibatch must be non-empty");

  auto data = std::make_shared<Data>(Data{train, val, C_reg, batch});
  HyperCleaningTask task;
  task.train = std::move(train);
  task.val = std::move(val);
  task.C_reg = C_reg;
  task.batch = batch;
  task.oracles = wire(data, false);
  task.reference.population = std::make_shared<ProblemOracles>(wire(data, true));
  task.reference.objective = [data](const Vector&, const Vector& theta) { return mean_logistic(data->val, theta, nullptr); };
  task.reference.constants_known = false;
  return task;
}

Vector inner_solve_reference(const ProblemOracles& oracles, const Vector& x, double tol, const Vector* y0, long max_iter) {
  detail::require(tol > 0.0, "inner_solve_reference: tol must be positive");
  detail::require(oracles.deterministic, "inner_solve_reference: requires deterministic oracles");
  Vector y = y0 ? *y0 : Vector::Zero(oracles.dim_y);
  detail::require_dim(y.size(), oracles.dim_y, "inner_solve_reference");
  const double step = 1.0 / oracles.constants.L_g;
  const SampleKey none{};
  for (long it = 0; it <= max_iter; ++it) {
    const Vector g = oracles.grad_g_y(x, y, none);
    if (g.norm() <= tol) return y;
    y = project(oracles.set_y, y - step * g);
  }
  throw NumericalFailure("inner_solve_reference: no convergence within " + std::to_string(max_iter) + " iterations");
}

double roc_auc(const Vector& score, const std::vector<bool>& positive) {
  detail::require(static_cast<std::size_t>(score.size()) == positive.size(), "roc_auc: size mismatch");
  std::vector<Eigen::Index> order(positive.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
  // Mann-Whitney U with midranks for ties.
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[static_cast<std::size_t>(order[k])]) {
        rank_sum += mid;
        ++npos;
      }
    }
    i = j + 1;
  }
  const std::size_t nneg = positive.size() - npos;
  detail::require(npos > 0 && nneg > 0, "roc_auc: need both classes");
  const double np = static_cast<double>(npos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(nneg));
}

}  // namespace bilevel
