#include "mdam/estimate.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <sstream>

#include "mdam/error.hpp"

namespace mdam {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

VarLevel parse_var_level(std::string_view text, const Schema& schema, bool allow_continuous) {
  const auto eq = text.find('=');
  const std::string name = trim(text.substr(0, eq));
  VarLevel vl;
  vl.variable = schema.index_of(name);
  const auto& spec = schema.variables[vl.variable];
  if (eq == std::string_view::npos) {
    if (!allow_continuous || spec.is_categorical()) {
      throw ValidationError("estimand term '" + std::string(text) + "' needs a level");
    }
    return vl;
  }
  vl.level = static_cast<int>(spec.parse_value(trim(text.substr(eq + 1))));
  return vl;
}

std::vector<VarLevel> parse_list(std::string_view text, const Schema& schema) {
  std::vector<VarLevel> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    out.push_back(parse_var_level(piece, schema, false));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool matches(const CompletedDataset& d, std::span<const VarLevel> terms, std::size_t i) {
  for (const auto& t : terms) {
    if (d.values[t.variable][i] != t.level) return false;
  }
  return true;
}

}  // namespace

Estimand Estimand::parse(std::string_view text, const Schema& schema) {
  Estimand e;
  e.name = std::string(text);
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ValidationError("estimand '" + e.name + "' needs a kind prefix");
  const std::string kind = trim(text.substr(0, colon));
  const auto body = text.substr(colon + 1);
  if (kind == "total") {
    e.kind = EstimandKind::total;
    e.target.push_back(parse_var_level(body, schema, true));
  } else if (kind == "cond") {
    e.kind = EstimandKind::conditional_prob;
    const auto bar = body.find('|');
    if (bar == std::string_view::npos) throw ValidationError("conditional estimand '" + e.name + "' needs '|'");
    e.target = parse_list(body.substr(0, bar), schema);
    e.conditions = parse_list(body.substr(bar + 1), schema);
  } else if (kind == "joint") {
    e.kind = EstimandKind::joint_prob;
    e.target = parse_list(body, schema);
  } else {
    throw ValidationError("unknown estimand kind '" + kind + "'");
  }
  e.check(schema);
  return e;
}

void Estimand::check(const Schema& schema) const {
  auto check_term = [&](const VarLevel& t) {
    if (t.variable >= schema.size()) throw ValidationError("estimand '" + name + "' references a missing variable");
    const auto& v = schema.variables[t.variable];
    if (v.is_categorical()) {
      if (t.level < 1 || t.level > v.levels) throw ValidationError("estimand '" + name + "' has an invalid level");
    } else if (t.level != 0 || kind != EstimandKind::total) {
      throw ValidationError("estimand '" + name + "': continuous variables support totals only");
    }
  };
  if (target.empty()) throw ValidationError("estimand '" + name + "' has no target");
  if (kind == EstimandKind::total && target.size() != 1) throw ValidationError("total estimand takes one term");
  if (kind == EstimandKind::conditional_prob && conditions.empty()) {
    throw ValidationError("conditional estimand '" + name + "' has no condition");
  }
  for (const auto& t : target) check_term(t);
  for (const auto& t : conditions) check_term(t);
}

PointVariance ht_total(const CompletedDataset& data, std::span<const double> weights, std::size_t variable,
                       int level) {
  PointVariance pv;
  const auto& col = data.values[variable];
  for (std::size_t i = 0; i < col.size(); ++i) {
    const double y = level == 0 ? col[i] : (col[i] == level ? 1.0 : 0.0);
    if (y == 0.0) continue;
    pv.estimate += weights[i] * y;
    pv.variance += weights[i] * (weights[i] - 1.0) * y * y;
  }
  return pv;
}

PointVariance ratio_prob(const CompletedDataset& data, std::span<const double> weights,
                         std::span<const VarLevel> target, std::span<const VarLevel> conditions) {
  const std::size_t n = data.size();
  double num = 0.0, den = 0.0;
  std::vector<std::uint8_t> in_cond(n), in_both(n);
  for (std::size_t i = 0; i < n; ++i) {
    in_cond[i] = matches(data, conditions, i);
    in_both[i] = in_cond[i] && matches(data, target, i);
    den += in_cond[i] * weights[i];
    num += in_both[i] * weights[i];
  }
  if (!(den > 0.0)) throw NumericalError("ratio estimate: conditioning cell has zero weight");
  PointVariance pv;
  pv.estimate = num / den;
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_cond[i]) continue;
    const double z = in_both[i] - pv.estimate;
    v += weights[i] * (weights[i] - 1.0) * z * z;
  }
  pv.variance = v / (den * den);
  return pv;
}

PointVariance estimate(const CompletedDataset& data, std::span<const double> weights, const Estimand& e) {
  switch (e.kind) {
    case EstimandKind::total:
      return ht_total(data, weights, e.target[0].variable, e.target[0].level);
    case EstimandKind::conditional_prob:
      return ratio_prob(data, weights, e.target, e.conditions);
    case EstimandKind::joint_prob:
      return ratio_prob(data, weights, e.target, {});
  }
  return {};
}

double population_value(const std::vector<std::vector<double>>& values, const Estimand& e) {
  const std::size_t n = values.empty() ? 0 : values.front().size();
  auto hit = [&](std::span<const VarLevel> terms, std::size_t i) {
    for (const auto& t : terms) {
      if (values[t.variable][i] != t.level) return false;
    }
    return true;
  };
  if (e.kind == EstimandKind::total) {
    const auto& t = e.target[0];
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += t.level == 0 ? values[t.variable][i] : (values[t.variable][i] == t.level);
    return s;
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool c = e.kind == EstimandKind::joint_prob || hit(e.conditions, i);
    if (!c) continue;
    den += 1.0;
    num += hit(e.target, i);
  }
  return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

double t_quantile_975(double df) {
  if (!std::isfinite(df)) return boost::math::quantile(boost::math::normal_distribution<double>(), 0.975);
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), 0.975);
}

CombinedEstimate rubin_combine(std::span<const PointVariance> per_dataset) {
  const std::size_t L = per_dataset.size();
  if (L < 2) throw ValidationError("Rubin's rules need L >= 2 datasets");
  CombinedEstimate ce;
  for (const auto& pv : per_dataset) {
    ce.qbar += pv.estimate;
    ce.ubar += pv.variance;
  }
  const double dl = static_cast<double>(L);
  ce.qbar /= dl;
  ce.ubar /= dl;
  for (const auto& pv : per_dataset) ce.b += (pv.estimate - ce.qbar) * (pv.estimate - ce.qbar);
  ce.b /= dl - 1.0;
  const double inflated = (1.0 + 1.0 / dl) * ce.b;
  ce.total_variance = ce.ubar + inflated;
  if (ce.b > 0.0) {
    const double r = ce.ubar / inflated;
    ce.df = (dl - 1.0) * (1.0 + r) * (1.0 + r);
  } else {
    ce.df = std::numeric_limits<double>::infinity();
  }
  const double half = t_quantile_975(ce.df) * std::sqrt(std::max(ce.total_variance, 0.0));
  ce.lower = ce.qbar - half;
  ce.upper = ce.qbar + half;
  return ce;
}

ReplicateMetrics evaluate_replicates(std::span<const CombinedEstimate> replicates, double truth) {
  if (replicates.size() < 2) throw ValidationError("replicate evaluation needs >= 2 replicates");
  ReplicateMetrics m;
  m.replicates = replicates.size();
  m.truth = truth;
  const double s = static_cast<double>(replicates.size());
  double sq = 0.0, cover = 0.0, bias = 0.0, width = 0.0, mean = 0.0;
  for (const auto& r : replicates) {
    const double e = r.qbar - truth;
    sq += e * e;
    bias += e;
    cover += r.contains(truth) ? 1.0 : 0.0;
    width += r.upper - r.lower;
    mean += r.qbar;
  }
  m.rmse = std::sqrt(sq / s);
  if (truth != 0.0) m.rrmse = m.rmse / std::abs(truth);
  m.coverage = cover / s;
  m.mean_bias = bias / s;
  m.mean_width = width / s;
  m.mean_estimate = mean / s;
  double var = 0.0;
  for (const auto& r : replicates) var += (r.qbar - m.mean_estimate) * (r.qbar - m.mean_estimate);
  m.sd_estimate = std::sqrt(var / (s - 1.0));
  return m;
}

}  // namespace mdam
