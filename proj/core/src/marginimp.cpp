#include "mdam/marginimp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mdam/error.hpp"
#include "mdam/parallel.hpp"

namespace mdam {

namespace {

std::string label(std::size_t l, const std::string& var, const char* what) {
  return "margin/" + std::to_string(l) + "/" + var + "/" + what;
}

void standardise_into(Matrix& X, Eigen::Index col, const std::vector<double>& v, const SampleFrame& f) {
  double s = 0.0, ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!f.respondent(i)) continue;
    s += v[i];
    ss += v[i] * v[i];
    ++n;
  }
  const double mean = n ? s / static_cast<double>(n) : 0.0;
  const double var = n ? ss / static_cast<double>(n) - mean * mean : 0.0;
  const double sd = var > 1e-24 ? std::sqrt(var) : 1.0;
  for (std::size_t i = 0; i < v.size(); ++i) X(static_cast<Eigen::Index>(i), col) = (v[i] - mean) / sd;
}

std::vector<std::size_t> nonrespondents(const SampleFrame& f) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f.respondent(i)) out.push_back(i);
  }
  return out;
}

int code_of(const CompletedDataset& d, std::size_t j, std::size_t i) {
  const double v = d.values[j][i];
  if (is_missing(v)) {
    throw ValidationError("variable '" + d.schema().variables[j].name + "' not imputed for unit " +
                          std::to_string(i));
  }
  return static_cast<int>(v);
}

double respondent_total(const CompletedDataset& d, std::span<const double> w, std::size_t j, int c) {
  const auto& f = *d.source;
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.respondent(i) && code_of(d, j, i) == c) s += w[i];
  }
  return s;
}

}  // namespace

const char* to_string(WorkingMode mode) {
  switch (mode) {
    case WorkingMode::logistic_on_z: return "logistic-on-z";
    case WorkingMode::logistic_on_w: return "logistic-on-w";
    case WorkingMode::intercept_only: return "intercept-only";
    case WorkingMode::weighted_ratio: return "weighted-ratio";
  }
  return "?";
}

WorkingMode parse_working_mode(std::string_view text) {
  if (text == "logistic-on-z") return WorkingMode::logistic_on_z;
  if (text == "logistic-on-w") return WorkingMode::logistic_on_w;
  if (text == "intercept-only") return WorkingMode::intercept_only;
  if (text == "weighted-ratio") return WorkingMode::weighted_ratio;
  throw ValidationError("unknown working mode '" + std::string(text) + "'");
}

TargetTotalDraw sample_target_totals(const VariableMargin& margin, double population_size, Rng& rng) {
  const std::size_t m = margin.totals.size();
  if (m < 2) throw ValidationError("margin for '" + margin.variable + "' needs >= 2 levels");
  TargetTotalDraw draw;
  draw.seed = rng.seed();
  draw.totals.assign(m, 0.0);
  for (int attempt = 0; attempt <= 100; ++attempt) {
    double sum = 0.0;
    bool ok = true;
    for (std::size_t c = 0; c + 1 < m; ++c) {
      const double v = margin.variances[c];
      if (is_missing(v)) throw ValidationError("margin variance for '" + margin.variable + "' unresolved");
      const double t = margin.totals[c] + std::sqrt(std::max(v, 0.0)) * rng.normal();
      draw.totals[c] = t;
      sum += t;
      ok = ok && t >= 0.0;
    }
    draw.totals[m - 1] = population_size - sum;
    ok = ok && draw.totals[m - 1] >= 0.0;
    if (ok) {
      draw.redraws = attempt;
      return draw;
    }
  }
  throw NumericalError("margin variance too large for '" + margin.variable + "'");
}

void resolve_default_variances(AuxiliaryMargins& margins, const CompletedDataset& completed,
                               std::span<const double> weights) {
  for (auto& m : margins.margins) {
    const std::size_t j = completed.schema().index_of(m.variable);
    for (std::size_t c = 0; c < m.variances.size(); ++c) {
      if (!is_missing(m.variances[c])) continue;
      double v = 0.0;
      for (std::size_t i = 0; i < completed.size(); ++i) {
        if (code_of(completed, j, i) == static_cast<int>(c + 1)) v += weights[i] * (weights[i] - 1.0);
      }
      m.variances[c] = v;
    }
  }
}

WorkingDistribution working_distribution(const CompletedDataset& data, std::size_t variable,
                                         std::span<const std::size_t> conditioners, WorkingMode mode,
                                         std::span<const double> weights) {
  const auto& f = *data.source;
  const auto& spec = f.schema.variables[variable];
  if (!spec.is_categorical()) throw ValidationError("margined variable '" + spec.name + "' is not categorical");
  const int m = spec.levels;

  WorkingDistribution out;
  out.provenance = mode;
  out.units = nonrespondents(f);
  out.probs.resize(static_cast<Eigen::Index>(out.units.size()), m);

  std::vector<std::size_t> resp;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.respondent(i)) resp.push_back(i);
  }
  if (resp.empty()) throw ValidationError("working distribution needs respondents");

  if (mode == WorkingMode::weighted_ratio) {
    // HT ratio shares within each pattern of the conditioning variables.
    std::map<std::vector<int>, std::vector<double>> cells;
    std::vector<double> marginal(m, 0.0);
    auto pattern = [&](std::size_t i) {
      std::vector<int> key;
      for (std::size_t k : conditioners) key.push_back(code_of(data, k, i));
      return key;
    };
    for (std::size_t i : resp) {
      auto& cell = cells.try_emplace(pattern(i), std::vector<double>(m, 0.0)).first->second;
      cell[code_of(data, variable, i) - 1] += weights[i];
      marginal[code_of(data, variable, i) - 1] += weights[i];
    }
    for (std::size_t r = 0; r < out.units.size(); ++r) {
      auto it = cells.find(pattern(out.units[r]));
      const auto& shares = it == cells.end() ? marginal : it->second;
      double total = 0.0;
      for (double s : shares) total += s;
      for (int c = 0; c < m; ++c) out.probs(static_cast<Eigen::Index>(r), c) = shares[c] / total;
    }
    return out;
  }

  Eigen::Index cols = 1;
  for (std::size_t k : conditioners) cols += f.schema.variables[k].levels - 1;
  if (mode == WorkingMode::logistic_on_z) cols += static_cast<Eigen::Index>(f.design.size());
  if (mode == WorkingMode::logistic_on_w) cols += 1;
  if (mode == WorkingMode::logistic_on_z && f.design.empty()) {
    throw ValidationError("logistic-on-z working distribution needs design columns");
  }

  const auto n = static_cast<Eigen::Index>(f.size());
  Matrix X(n, cols);
  X.col(0).setOnes();
  Eigen::Index col = 1;
  for (std::size_t k : conditioners) {
    const int levels = f.schema.variables[k].levels;
    for (int level = 1; level < levels; ++level, ++col) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double v = data.values[k][i];
        X(i, col) = is_missing(v) ? kMissing : (v == level ? 1.0 : 0.0);
      }
    }
  }
  if (mode == WorkingMode::logistic_on_z) {
    for (const auto& dcol : f.design) standardise_into(X, col++, dcol, f);
  } else if (mode == WorkingMode::logistic_on_w) {
    std::vector<double> lw(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) lw[i] = std::log(weights[i]);
    standardise_into(X, col++, lw, f);
  }

  Matrix xr(static_cast<Eigen::Index>(resp.size()), cols);
  std::vector<int> y(resp.size());
  std::vector<double> wr(resp.size());
  for (std::size_t r = 0; r < resp.size(); ++r) {
    xr.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(resp[r]));
    y[r] = code_of(data, variable, resp[r]);
    wr[r] = weights[resp[r]];
  }
  const LogisticFit fit = fit_logistic(xr, y, m, wr);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (std::size_t r = 0; r < out.units.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(out.units[r]);
    for (Eigen::Index k = 0; k < cols; ++k) {
      if (is_missing(X(i, k))) {
        throw ValidationError("conditioning variable not imputed for unit " + std::to_string(i));
      }
      row[k] = X(i, k);
    }
    out.probs.row(static_cast<Eigen::Index>(r)) = predict_proba(fit, row).transpose();
  }
  return out;
}

AdjustmentFactors adjustment_factors(const WorkingDistribution& working, const CompletedDataset& data,
                                     std::span<const double> weights, const TargetTotalDraw& draw,
                                     std::size_t variable) {
  const int m = static_cast<int>(working.probs.cols());
  if (static_cast<int>(draw.totals.size()) != m) throw ValidationError("target draw has the wrong level count");
  AdjustmentFactors out;
  out.factors.assign(m, 1.0);
  out.numerators.assign(m, 0.0);
  out.denominators.assign(m, 0.0);
  out.defined.assign(m, true);
  for (int c = 0; c < m; ++c) {
    const double num = draw.totals[c] - respondent_total(data, weights, variable, c + 1);
    double den = 0.0;
    for (std::size_t r = 0; r < working.units.size(); ++r) {
      den += weights[working.units[r]] * working.probs(static_cast<Eigen::Index>(r), c);
    }
    out.numerators[c] = num;
    out.denominators[c] = den;
    if (den == 0.0) {
      if (num != 0.0 && c + 1 < m) {
        throw NumericalError("adjustment factor for level " + std::to_string(c + 1) +
                             " has a zero denominator");
      }
      out.defined[c] = false;
      continue;
    }
    const double fc = num / den;
    if (!std::isfinite(fc)) throw NumericalError("adjustment factor is not finite");
    out.factors[c] = fc;
  }
  return out;
}

Vector adjust_vector(const Vector& p, std::span<const double> factors, bool& renormalized, bool& clamped) {
  const auto m = p.size();
  renormalized = false;
  clamped = false;
  double partial = 0.0;
  for (Eigen::Index c = 0; c + 1 < m; ++c) partial += factors[c] * p[c];

  Vector q(m);
  if (partial > 1.0) {
    renormalized = true;
    for (Eigen::Index c = 0; c < m; ++c) q[c] = factors[c] * p[c];
  } else {
    for (Eigen::Index c = 0; c + 1 < m; ++c) q[c] = factors[c] * p[c];
    q[m - 1] = 1.0 - partial;
  }
  for (Eigen::Index c = 0; c < m; ++c) {
    if (q[c] < 0.0) {
      q[c] = 0.0;
      clamped = true;
    }
  }
  if (renormalized || clamped) {
    const double total = q.sum();
    if (!(total > 0.0)) throw NumericalError("infeasible adjustment: probability vector clamps to zero");
    q /= total;
  }
  return q;
}

AdjustedDistribution finalize_probs(const WorkingDistribution& working, const AdjustmentFactors& factors) {
  AdjustedDistribution out;
  out.dist = working;
  const auto n = working.probs.rows();
  out.renormalized.assign(static_cast<std::size_t>(n), 0);
  out.clamped.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index r = 0; r < n; ++r) {
    bool ren = false, cl = false;
    out.dist.probs.row(r) = adjust_vector(working.probs.row(r).transpose(), factors.factors, ren, cl).transpose();
    out.renormalized[r] = ren;
    out.clamped[r] = cl;
    out.counts.renormalized += ren;
    out.counts.clamped += cl;
  }
  return out;
}

CompletedDataset draw_imputations(const CompletedDataset& data, std::size_t variable,
                                  const WorkingDistribution& dist, Rng& rng) {
  CompletedDataset out = data;
  for (std::size_t r = 0; r < dist.units.size(); ++r) {
    const auto row = dist.probs.row(static_cast<Eigen::Index>(r));
    std::vector<double> p(static_cast<std::size_t>(row.size()));
    for (Eigen::Index c = 0; c < row.size(); ++c) p[c] = row[c];
    out.impute(variable, dist.units[r], static_cast<double>(rng.categorical(p) + 1), CellSource::unit_imputed);
  }
  return out;
}

CompletedDataset impute_variable_adj(const CompletedDataset& data, std::size_t variable,
                                     std::span<const std::size_t> conditioners,
                                     std::span<const double> weights, const TargetTotalDraw& draw,
                                     WorkingMode mode, Rng& rng, MarginDiagnostics* diag) {
  if (data.source->nonrespondent_count() == 0) return data;
  const auto working = working_distribution(data, variable, conditioners, mode, weights);
  const auto factors = adjustment_factors(working, data, weights, draw, variable);
  const auto adjusted = finalize_probs(working, factors);
  if (diag) {
    diag->target_totals = draw.totals;
    diag->factors = factors.factors;
    diag->safeguards = adjusted.counts;
    diag->total_redraws = draw.redraws;
  }
  return draw_imputations(data, variable, adjusted.dist, rng);
}

ImputeResult impute_margin_adj(const std::vector<CompletedDataset>& datasets, std::size_t variable,
                               std::span<const std::size_t> conditioners, const AuxiliaryMargins& margins,
                               std::span<const double> weights, WorkingMode mode, std::uint64_t seed,
                               unsigned threads) {
  ImputeResult res;
  res.datasets.resize(datasets.size());
  res.diagnostics.resize(datasets.size());
  if (datasets.empty()) return res;
  const auto& name = datasets.front().schema().variables[variable].name;
  const auto& margin = margins.at(name);
  const double pop = datasets.front().source->population_size;
  parallel_for(datasets.size(), threads, [&](std::size_t l) {
    auto& diag = res.diagnostics[l];
    diag.variable = name;
    diag.dataset = l;
    diag.method = "adj";
    if (datasets[l].source->nonrespondent_count() == 0) {
      res.datasets[l] = datasets[l];
      return;
    }
    const auto tl = label(l, name, "totals");
    const auto dl = label(l, name, "draw");
    diag.substreams = {tl, dl};
    Rng totals_rng = Rng::substream(seed, tl);
    Rng draw_rng = Rng::substream(seed, dl);
    const auto draw = sample_target_totals(margin, pop, totals_rng);
    res.datasets[l] = impute_variable_adj(datasets[l], variable, conditioners, weights, draw, mode, draw_rng, &diag);
  });
  return res;
}

// -- MDAM-sys -------------------------------------------------------------------

ConditionalProbTable SysSystem::table(const Vector& x) const {
  ConditionalProbTable t;
  t.levels = m2;
  t.conditions = m1;
  t.probs.resize(m2, m1);
  for (int d = 0; d < m1; ++d) {
    double rest = 0.0;
    for (int c = 1; c < m2; ++c) {
      const double v = x[(c - 1) * m1 + d];
      t.probs(c, d) = v;
      rest += v;
    }
    t.probs(0, d) = 1.0 - rest;
  }
  return t;
}

Vector SysSystem::unknowns(const ConditionalProbTable& t) const {
  Vector x(static_cast<Eigen::Index>(m1) * (m2 - 1));
  for (int c = 1; c < m2; ++c) {
    for (int d = 0; d < m1; ++d) x[(c - 1) * m1 + d] = t.probs(c, d);
  }
  return x;
}

Vector SysSystem::log_odds_residuals(const ConditionalProbTable& t) const {
  Vector r(static_cast<Eigen::Index>(m1 - 1) * (m2 - 1));
  Eigen::Index k = 0;
  const Matrix& q = respondent_probs;
  for (int c = 1; c < m2; ++c) {
    for (int d = 1; d < m1; ++d) {
      const double lhs = std::log(t.probs(c, d) / t.probs(0, d)) - std::log(t.probs(c, 0) / t.probs(0, 0));
      const double rhs = std::log(q(c, d) / q(0, d)) - std::log(q(c, 0) / q(0, 0));
      r[k++] = lhs - rhs;
    }
  }
  return r;
}

Vector SysSystem::total_residuals(const ConditionalProbTable& t) const {
  Vector r(m2 - 1);
  for (int c = 0; c + 1 < m2; ++c) {
    double lhs = 0.0;
    for (int d = 0; d < m1; ++d) lhs += cell_weight[d] * t.probs(c, d);
    r[c] = lhs - (targets[c] - respondent_totals[c]);
  }
  return r;
}

SysSystem build_sys_system(const CompletedDataset& data, std::size_t x2, std::size_t x1,
                           std::span<const double> weights, const TargetTotalDraw& draw) {
  const auto& f = *data.source;
  SysSystem s;
  s.m2 = f.schema.variables[x2].levels;
  s.m1 = f.schema.variables[x1].levels;
  if (static_cast<int>(draw.totals.size()) != s.m2) throw ValidationError("target draw has the wrong level count");
  s.targets = draw.totals;
  s.cell_weight = Vector::Zero(s.m1);
  s.respondent_totals = Vector::Zero(s.m2);
  Matrix cells = Matrix::Zero(s.m2, s.m1);
  double min_w = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < f.size(); ++i) {
    const int d = code_of(data, x1, i) - 1;
    if (f.respondent(i)) {
      const int c = code_of(data, x2, i) - 1;
      cells(c, d) += weights[i];
      s.respondent_totals[c] += weights[i];
      if (weights[i] > 0.0) min_w = std::min(min_w, weights[i]);
    } else {
      s.cell_weight[d] += weights[i];
    }
  }
  for (int d = 0; d < s.m1; ++d) {
    if (!(cells.col(d).sum() > 0.0)) {
      throw NumericalError("inestimable log-odds: no respondents with " + f.schema.variables[x1].name + " = " +
                           std::to_string(d + 1));
    }
  }
  const double eps = 0.5 * min_w;
  for (int d = 0; d < s.m1; ++d) {
    for (int c = 0; c < s.m2; ++c) {
      if (cells(c, d) == 0.0) {
        cells(c, d) = eps;
        s.continuity_corrected = true;
      }
    }
  }
  s.respondent_probs = cells.array().rowwise() / cells.colwise().sum().array();

  const double scale = std::max(1.0, s.cell_weight.sum());
  const SysSystem proto = s;  // captured by value; the residual never refers back to `s`
  s.equations.dimension = static_cast<Eigen::Index>(s.m1) * (s.m2 - 1);
  s.equations.probability_system = true;
  // totals equations are scaled by `scale`; keep their unscaled residual below 1e-9
  s.equations.tolerance = std::min(1e-10, 1e-9 / scale);
  s.equations.residual = [proto, scale](const Vector& x) {
    const auto t = proto.table(x);
    const Eigen::Index n = x.size();
    if ((t.probs.array() <= 0.0).any()) return Vector(Vector::Constant(n, std::numeric_limits<double>::quiet_NaN()));
    Vector r(n);
    const Vector lo = proto.log_odds_residuals(t);
    const Vector tot = proto.total_residuals(t) / scale;
    r << lo, tot;
    return r;
  };
  ConditionalProbTable start;
  start.levels = s.m2;
  start.conditions = s.m1;
  start.probs = s.respondent_probs;
  s.equations.initial = s.unknowns(start);
  return s;
}

bool clamp_table(ConditionalProbTable& table) {
  bool changed = false;
  for (Eigen::Index d = 0; d < table.probs.cols(); ++d) {
    for (Eigen::Index c = 0; c < table.probs.rows(); ++c) {
      double& v = table.probs(c, d);
      if (v < 0.0 || v > 1.0) {
        v = std::clamp(v, 0.0, 1.0);
        changed = true;
      }
    }
    const double s = table.probs.col(d).sum();
    if (!(s > 0.0)) throw NumericalError("solved probability column is all zero");
    if (std::abs(s - 1.0) > 1e-15) {
      table.probs.col(d) /= s;
      changed = changed || std::abs(s - 1.0) > 1e-12;
    }
  }
  return changed;
}

CompletedDataset impute_variable_sys(const CompletedDataset& data, std::size_t x2, std::size_t x1,
                                     std::span<const double> weights, const TargetTotalDraw& draw,
                                     WorkingMode mode, Rng& rng, MarginDiagnostics* diag) {
  const auto& f = *data.source;
  if (f.nonrespondent_count() == 0) return data;
  const SysSystem sys = build_sys_system(data, x2, x1, weights, draw);
  ConditionalProbTable table;
  bool clamped_solution = false;
  try {
    const SolveResult sol = solve_system(sys.equations);
    table = sys.table(sol.root);
    if (diag) {
      diag->solver_residual = sol.max_residual;
      diag->solver_iterations = sol.iterations;
      diag->solver_dogleg_steps = sol.dogleg_steps;
    }
  } catch (const SolverError& e) {
    if (!e.out_of_domain()) throw;
    // The totals cannot be met inside (0,1): use the closest feasible point.
    table = sys.table(Eigen::Map<const Vector>(e.best_x().data(), static_cast<Eigen::Index>(e.best_x().size())));
    clamped_solution = true;
    if (diag) diag->solver_residual = e.best_residual();
  }
  clamped_solution = clamp_table(table) || clamped_solution;

  WorkingDistribution dist;
  dist.units = nonrespondents(f);
  dist.provenance = mode;
  dist.probs.resize(static_cast<Eigen::Index>(dist.units.size()), sys.m2);
  SafeguardCounts counts;

  bool varying = false;
  WorkingDistribution working;
  if (mode == WorkingMode::logistic_on_z || mode == WorkingMode::logistic_on_w) {
    const std::size_t cond[] = {x1};
    working = working_distribution(data, x2, cond, mode, weights);
    std::vector<Vector> first(static_cast<std::size_t>(sys.m1));
    for (std::size_t r = 0; r < working.units.size() && !varying; ++r) {
      const int d = code_of(data, x1, working.units[r]) - 1;
      const Vector p = working.probs.row(static_cast<Eigen::Index>(r)).transpose();
      if (first[d].size() == 0) {
        first[d] = p;
      } else if ((first[d] - p).lpNorm<Eigen::Infinity>() > 1e-12) {
        varying = true;
      }
    }
  }

  if (!varying) {
    for (std::size_t r = 0; r < dist.units.size(); ++r) {
      const int d = code_of(data, x1, dist.units[r]) - 1;
      dist.probs.row(static_cast<Eigen::Index>(r)) = table.probs.col(d).transpose();
    }
  } else {
    // Rescale unit-varying working probabilities cell by cell so their weighted
    // sum within each X1 cell matches the solved table.
    Matrix num = Matrix::Zero(sys.m2, sys.m1);
    Matrix den = Matrix::Zero(sys.m2, sys.m1);
    for (std::size_t r = 0; r < working.units.size(); ++r) {
      const std::size_t i = working.units[r];
      const int d = code_of(data, x1, i) - 1;
      for (int c = 0; c < sys.m2; ++c) {
        num(c, d) += weights[i] * table.probs(c, d);
        den(c, d) += weights[i] * working.probs(static_cast<Eigen::Index>(r), c);
      }
    }
    Matrix fac = Matrix::Ones(sys.m2, sys.m1);
    for (int d = 0; d < sys.m1; ++d) {
      for (int c = 0; c < sys.m2; ++c) {
        if (den(c, d) > 0.0) {
          fac(c, d) = num(c, d) / den(c, d);
        } else if (num(c, d) != 0.0 && c + 1 < sys.m2) {
          throw NumericalError("unit-varying rescaling has a zero denominator");
        }
      }
    }
    std::vector<double> fd(static_cast<std::size_t>(sys.m2));
    for (std::size_t r = 0; r < working.units.size(); ++r) {
      const int d = code_of(data, x1, working.units[r]) - 1;
      for (int c = 0; c < sys.m2; ++c) fd[c] = fac(c, d);
      bool ren = false, cl = false;
      dist.probs.row(static_cast<Eigen::Index>(r)) =
          adjust_vector(working.probs.row(static_cast<Eigen::Index>(r)).transpose(), fd, ren, cl).transpose();
      counts.renormalized += ren;
      counts.clamped += cl;
    }
    if (diag) diag->factors.assign(fac.data(), fac.data() + fac.size());
  }

  if (diag) {
    diag->target_totals = draw.totals;
    diag->safeguards = counts;
    diag->solution_clamped = clamped_solution;
    diag->continuity_corrected = sys.continuity_corrected;
    diag->total_redraws = draw.redraws;
  }
  return draw_imputations(data, x2, dist, rng);
}

ImputeResult impute_margin_sys(const std::vector<CompletedDataset>& datasets, std::size_t x2, std::size_t x1,
                               const AuxiliaryMargins& margins, std::span<const double> weights,
                               WorkingMode mode, std::uint64_t seed, unsigned threads) {
  ImputeResult res;
  res.datasets.resize(datasets.size());
  res.diagnostics.resize(datasets.size());
  if (datasets.empty()) return res;
  const auto& name = datasets.front().schema().variables[x2].name;
  const auto& margin = margins.at(name);
  const double pop = datasets.front().source->population_size;
  parallel_for(datasets.size(), threads, [&](std::size_t l) {
    auto& diag = res.diagnostics[l];
    diag.variable = name;
    diag.dataset = l;
    diag.method = "sys";
    if (datasets[l].source->nonrespondent_count() == 0) {
      res.datasets[l] = datasets[l];
      return;
    }
    const auto tl = label(l, name, "totals");
    const auto dl = label(l, name, "draw");
    diag.substreams = {tl, dl};
    Rng totals_rng = Rng::substream(seed, tl);
    Rng draw_rng = Rng::substream(seed, dl);
    const auto draw = sample_target_totals(margin, pop, totals_rng);
    try {
      res.datasets[l] = impute_variable_sys(datasets[l], x2, x1, weights, draw, mode, draw_rng, &diag);
    } catch (const SolverError& e) {
      throw SolverError("dataset " + std::to_string(l + 1) + ": " + e.what(), e.best_x(), e.best_residual(),
                        e.out_of_domain());
    }
  });
  return res;
}

std::vector<double> fabricated_weights(const SampleFrame& frame) {
  return ht_weight_view(frame, WeightMode::fabricated);
}

}  // namespace mdam
