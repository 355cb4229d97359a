#include "mdam/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mdam/error.hpp"
#include "mdam/parallel.hpp"

namespace mdam {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

PopulationConfig PopulationConfig::defaults() {
  PopulationConfig c;
  auto bin = [](std::string name, double b0, double bz, std::vector<double> prev) {
    GeneratorEquation e;
    e.name = std::move(name);
    e.intercept = b0;
    e.size_coef = bz;
    e.prev = std::move(prev);
    return e;
  };
  c.equations.push_back(bin("X1", -0.08, 0.2, {}));
  c.equations.push_back(bin("X2", -1.992, 0.1, {1.791}));
  c.equations.push_back(bin("X3", 1.8, 0.2, {0.3, 0.4}));
  c.equations.push_back(bin("X4", -1.2, -0.2, {0.1, -0.4, 0.2}));
  GeneratorEquation x5;
  x5.name = "X5";
  x5.binary = false;
  x5.lo = 0.0;
  x5.hi = 888.0;
  x5.log_scale = true;
  x5.intercept = 3.0;
  x5.size_coef = 0.05;
  x5.prev = {0.15, 0.05, 0.0, -0.2};
  x5.sd = 0.7;
  c.equations.push_back(x5);
  GeneratorEquation x6;
  x6.name = "X6";
  x6.binary = false;
  x6.lo = 0.0;
  x6.hi = 80.0;
  x6.intercept = 22.0;
  x6.size_coef = 1.0;
  x6.prev = {4.0, 3.0, 5.0, -3.0, 0.02};
  x6.sd = 11.0;
  c.equations.push_back(x6);
  return c;
}

void PopulationConfig::check() const {
  if (population_size < 1000) throw ValidationError("population size must be at least 1000");
  if (!(size_log_sd >= 0.0) || !std::isfinite(size_log_mean)) throw ValidationError("invalid size-measure parameters");
  if (!(size_lo > 0.0) || !(size_hi > size_lo)) throw ValidationError("invalid size-measure clipping bounds");
  if (equations.empty()) throw ValidationError("population needs at least one variable");
  for (std::size_t j = 0; j < equations.size(); ++j) {
    const auto& e = equations[j];
    if (e.prev.size() != j) {
      throw ValidationError("generator for '" + e.name + "' needs " + std::to_string(j) + " coefficients on earlier variables");
    }
    if (!e.binary && (!(e.hi > e.lo) || !(e.sd > 0.0))) {
      throw ValidationError("generator for '" + e.name + "' has invalid range or sd");
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(e.intercept) || !finite(e.size_coef) || !std::all_of(e.prev.begin(), e.prev.end(), finite)) {
      throw ValidationError("generator for '" + e.name + "' has non-finite coefficients");
    }
  }
  schema().check();
}

Schema PopulationConfig::schema() const {
  Schema s;
  for (const auto& e : equations) {
    if (e.binary) {
      s.variables.push_back(VariableSpec::categorical(e.name, 2));
    } else {
      s.variables.push_back(VariableSpec::continuous(e.name, e.lo, e.hi));
    }
  }
  for (const auto& m : margined) {
    auto j = s.find(m);
    if (!j) throw ValidationError("margined variable '" + m + "' is not generated");
    s.variables[*j].in_margins = true;
  }
  s.design_variables = {"Z"};
  return s;
}

double Population::expected_sample_size() const {
  double s = 0.0;
  for (double p : inclusion) s += p;
  return s;
}

double model_value(const VariableSpec& v, double stored) {
  if (v.is_categorical()) return stored == 1.0 ? 1.0 : 0.0;
  return stored;
}

Population synth_population(const PopulationConfig& config, Rng& rng) {
  config.check();
  Population pop;
  pop.schema = config.schema();
  const std::size_t n = config.population_size;
  pop.size.resize(n);
  pop.inclusion.resize(n);
  std::vector<double> lz(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = std::clamp(std::exp(config.size_log_mean + config.size_log_sd * rng.normal()), config.size_lo,
                                config.size_hi);
    pop.size[i] = z;
    pop.inclusion[i] = std::min(1.0, 1.0 / (10.0 * z));
    lz[i] = config.size_log_sd > 0.0 ? (std::log(z) - config.size_log_mean) / config.size_log_sd : 0.0;
  }
  const std::size_t p = config.equations.size();
  pop.values.assign(p, std::vector<double>(n));
  for (std::size_t j = 0; j < p; ++j) {
    const auto& e = config.equations[j];
    for (std::size_t i = 0; i < n; ++i) {
      double eta = e.intercept + e.size_coef * lz[i];
      for (std::size_t k = 0; k < j; ++k) eta += e.prev[k] * model_value(pop.schema.variables[k], pop.values[k][i]);
      if (e.binary) {
        pop.values[j][i] = rng.bernoulli(expit(eta)) ? 1.0 : 2.0;
      } else {
        double y = eta + e.sd * rng.normal();
        if (e.log_scale) y = std::exp(y);
        pop.values[j][i] = std::clamp(y, e.lo, e.hi);
      }
    }
  }
  return pop;
}

SampleFrame poisson_sample(const Population& pop, Rng& rng) {
  SampleFrame f;
  f.schema = pop.schema;
  f.population_size = static_cast<double>(pop.size_n());
  f.values.assign(pop.values.size(), {});
  f.design.assign(1, {});
  for (std::size_t i = 0; i < pop.size_n(); ++i) {
    if (!rng.bernoulli(pop.inclusion[i])) continue;
    f.weights.push_back(1.0 / pop.inclusion[i]);
    f.unit_nr.push_back(0);
    for (std::size_t j = 0; j < pop.values.size(); ++j) f.values[j].push_back(pop.values[j][i]);
    f.design[0].push_back(pop.size[i]);
  }
  return f;
}

NonresponseConfig NonresponseConfig::defaults(std::size_t variables) {
  NonresponseConfig nr;
  nr.phi0.resize(variables);
  nr.phi.assign(variables, std::vector<double>(variables, 0.0));
  for (std::size_t j = 0; j < variables; ++j) {
    nr.phi0[j] = j < 4 ? -1.6 : -1.5;
    for (std::size_t k = 0; k < variables; ++k) nr.phi[j][k] = k == j ? 0.0 : (k < 4 ? 0.1 : 1e-4);
  }
  return nr;
}

void NonresponseConfig::check(const Schema& schema) const {
  if (omega.size() != unit_vars.size() + 1) throw ValidationError("unit nonresponse needs one coefficient per variable plus an intercept");
  for (const auto& v : unit_vars) schema.index_of(v);
  const std::size_t p = schema.size();
  if (phi0.size() != p || phi.size() != p) throw ValidationError("item nonresponse coefficients must cover every variable");
  for (const auto& row : phi) {
    if (row.size() != p) throw ValidationError("item nonresponse coefficient matrix must be square");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(omega.begin(), omega.end(), finite) || !std::all_of(phi0.begin(), phi0.end(), finite) ||
      !std::isfinite(phi_z)) {
    throw ValidationError("nonresponse coefficients must be finite");
  }
  for (const auto& row : phi) {
    if (!std::all_of(row.begin(), row.end(), finite)) throw ValidationError("nonresponse coefficients must be finite");
  }
}

std::vector<double> apply_unit_nonresponse(SampleFrame& sample, const NonresponseConfig& nr, Rng& rng) {
  nr.check(sample.schema);
  std::vector<std::size_t> idx;
  for (const auto& v : nr.unit_vars) idx.push_back(sample.schema.index_of(v));
  std::vector<double> probs(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double eta = nr.omega[0];
    for (std::size_t k = 0; k < idx.size(); ++k) {
      eta += nr.omega[k + 1] * model_value(sample.schema.variables[idx[k]], sample.values[idx[k]][i]);
    }
    probs[i] = expit(eta);
    if (rng.bernoulli(probs[i])) {
      sample.unit_nr[i] = 1;
      for (auto& col : sample.values) col[i] = kMissing;
    }
  }
  return probs;
}

double item_nonresponse_logit(const NonresponseConfig& nr, const Schema& schema, std::size_t j,
                              std::span<const double> record, double z) {
  double eta = nr.phi0[j] + nr.phi_z * z;
  for (std::size_t k = 0; k < record.size(); ++k) {
    if (k == j) continue;
    eta += nr.phi[j][k] * model_value(schema.variables[k], record[k]);
  }
  return eta;
}

void apply_item_nonresponse(SampleFrame& sample, const NonresponseConfig& nr, Rng& rng) {
  nr.check(sample.schema);
  const std::size_t p = sample.schema.size();
  std::vector<double> record(p);
  std::vector<std::vector<std::uint8_t>> blank(p, std::vector<std::uint8_t>(sample.size(), 0));
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (!sample.respondent(i)) continue;
    for (std::size_t k = 0; k < p; ++k) record[k] = sample.values[k][i];
    const double z = sample.design.empty() ? 0.0 : sample.design[0][i];
    for (std::size_t j = 0; j < p; ++j) {
      blank[j][i] = rng.bernoulli(expit(item_nonresponse_logit(nr, sample.schema, j, record, z)));
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < sample.size(); ++i) {
      if (blank[j][i]) sample.values[j][i] = kMissing;
    }
  }
}

std::vector<std::string> StudyConfig::default_estimands() {
  return {"total:X1=1",       "total:X2=1",       "total:X3=1",       "total:X4=1",
          "total:X5",         "total:X6",         "cond:X2=1|X1=1",   "cond:X2=1|X1=2",
          "cond:X3=1|X2=1",   "cond:X4=1|X1=1",   "joint:X1=1,X2=1",  "joint:X3=1,X4=1"};
}

void StudyConfig::check() const {
  if (replicates < 2) throw ValidationError("study needs at least 2 replicates");
  if (methods.empty()) throw ValidationError("study needs at least one method");
  if (!(failure_cap >= 0.0 && failure_cap < 1.0)) throw ValidationError("failure cap must be in [0, 1)");
  if (items.datasets < 2) throw ValidationError("study needs L >= 2 completed datasets");
}

SampleFrame draw_replicate(const Population& pop, const NonresponseConfig& nr, std::uint64_t seed, std::size_t r) {
  Rng rng = Rng::substream(seed, "replicate/" + std::to_string(r));
  SampleFrame f = poisson_sample(pop, rng);
  apply_unit_nonresponse(f, nr, rng);
  apply_item_nonresponse(f, nr, rng);
  return f;
}

AuxiliaryMargins population_margins(const Population& pop) {
  AuxiliaryMargins m;
  for (std::size_t j : pop.schema.margined()) {
    const auto& v = pop.schema.variables[j];
    VariableMargin vm;
    vm.variable = v.name;
    vm.totals.assign(static_cast<std::size_t>(v.levels), 0.0);
    vm.variances.assign(static_cast<std::size_t>(v.levels), kMissing);
    for (double x : pop.values[j]) vm.totals[static_cast<std::size_t>(x) - 1] += 1.0;
    m.margins.push_back(std::move(vm));
  }
  return m;
}

StudyResult run_study(const StudyConfig& study, const PopulationConfig& pop_config, const NonresponseConfig& nr) {
  Rng rng = Rng::substream(study.seed, "population");
  return run_study(study, synth_population(pop_config, rng), nr);
}

StudyResult run_study(const StudyConfig& study, const Population& pop, const NonresponseConfig& nr) {
  study.check();
  nr.check(pop.schema);
  StudyResult res;
  res.population_size = static_cast<double>(pop.size_n());
  const auto names = study.estimands.empty() ? StudyConfig::default_estimands() : study.estimands;
  for (const auto& n : names) {
    auto e = Estimand::parse(n, pop.schema);
    e.truth = population_value(pop.values, e);
    res.estimands.push_back(std::move(e));
  }
  const auto margins = population_margins(pop);
  const std::size_t S = study.replicates;
  const std::size_t M = study.methods.size();
  const std::size_t E = res.estimands.size();
  const std::size_t p = pop.schema.size();

  struct Slot {
    bool ok = false;
    std::string error;
    std::vector<ReplicateRecord> records;
    std::size_t n = 0, nr = 0;
    std::vector<double> item_rate;
  };
  std::vector<Slot> slots(S);
  parallel_for(S, study.threads, [&](std::size_t r) {
    auto& slot = slots[r];
    try {
      auto frame = std::make_shared<const SampleFrame>(draw_replicate(pop, nr, study.seed, r));
      slot.n = frame->size();
      slot.nr = frame->nonrespondent_count();
      slot.item_rate.assign(p, 0.0);
      const double resp = static_cast<double>(frame->respondent_count());
      for (std::size_t j = 0; j < p; ++j) {
        std::size_t miss = 0;
        for (std::size_t i = 0; i < frame->size(); ++i) miss += frame->item_missing(i, j);
        slot.item_rate[j] = resp > 0 ? static_cast<double>(miss) / resp : 0.0;
      }
      const std::uint64_t imp_seed = derive_seed(study.seed, "replicate/" + std::to_string(r) + "/impute");
      const auto stage = impute_item_stage(frame, margins, study.items, imp_seed, 1);
      for (Method m : study.methods) {
        PipelineOptions opt;
        opt.method = m;
        opt.items = study.items;
        opt.mode = study.mode;
        const auto out = complete_units(stage, opt, imp_seed);
        std::vector<PointVariance> per(out.datasets.size());
        for (const auto& e : res.estimands) {
          for (std::size_t l = 0; l < out.datasets.size(); ++l) per[l] = estimate(out.datasets[l], out.weights, e);
          ReplicateRecord rec;
          rec.replicate = r;
          rec.method = m;
          rec.estimand = e.name;
          rec.truth = *e.truth;
          rec.estimate = rubin_combine(per);
          rec.weight_sum = out.report.weight_sum;
          rec.sample_size = slot.n;
          rec.unit_nonrespondents = slot.nr;
          slot.records.push_back(std::move(rec));
        }
      }
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.records.clear();
      slot.error = e.what();
    }
  });

  std::size_t good = 0;
  double n_sum = 0.0, nr_sum = 0.0;
  res.item_nr_rate.assign(p, 0.0);
  for (std::size_t r = 0; r < S; ++r) {
    auto& slot = slots[r];
    if (!slot.ok) {
      res.failures.push_back({r, slot.error});
      continue;
    }
    ++good;
    n_sum += static_cast<double>(slot.n);
    nr_sum += static_cast<double>(slot.nr);
    for (std::size_t j = 0; j < p; ++j) res.item_nr_rate[j] += slot.item_rate[j];
    for (auto& rec : slot.records) res.records.push_back(std::move(rec));
  }
  const double cap = study.failure_cap * static_cast<double>(S);
  if (static_cast<double>(res.failures.size()) > cap || good < 2) {
    throw NumericalError("study aborted: " + std::to_string(res.failures.size()) + " of " + std::to_string(S) +
                         " replicates failed (first: replicate " + std::to_string(res.failures.front().replicate) +
                         ": " + res.failures.front().message + ")");
  }
  res.mean_sample_size = n_sum / static_cast<double>(good);
  res.unit_nr_rate = n_sum > 0 ? nr_sum / n_sum : 0.0;
  for (auto& v : res.item_nr_rate) v /= static_cast<double>(good);

  // records are ordered replicate-major, then method, then estimand
  for (std::size_t mi = 0; mi < M; ++mi) {
    for (std::size_t ei = 0; ei < E; ++ei) {
      std::vector<CombinedEstimate> ce;
      ce.reserve(good);
      for (std::size_t g = 0; g < good; ++g) ce.push_back(res.records[(g * M + mi) * E + ei].estimate);
      MetricRow row;
      row.method = study.methods[mi];
      row.estimand = res.estimands[ei].name;
      row.metrics = evaluate_replicates(ce, *res.estimands[ei].truth);
      res.metrics.push_back(std::move(row));
    }
  }
  return res;
}

void write_records_csv(std::ostream& out, const StudyResult& result) {
  out << "replicate,method,estimand,truth,qbar,ubar,b,total_variance,df,lower,upper,weight_sum,n,unit_nr\n";
  for (const auto& r : result.records) {
    const auto& e = r.estimate;
    out << r.replicate << ',' << to_string(r.method) << ",\"" << r.estimand << "\"," << num(r.truth) << ','
        << num(e.qbar) << ',' << num(e.ubar) << ',' << num(e.b) << ',' << num(e.total_variance) << ','
        << num(e.df) << ',' << num(e.lower) << ',' << num(e.upper) << ',' << num(r.weight_sum) << ','
        << r.sample_size << ',' << r.unit_nonrespondents << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "method,estimand,truth,replicates,rmse,rrmse,coverage,mean_bias,mean_width,mean_estimate,sd_estimate\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << to_string(r.method) << ",\"" << r.estimand << "\"," << num(m.truth) << ',' << m.replicates << ','
        << num(m.rmse) << ',' << (m.rrmse ? num(*m.rrmse) : std::string()) << ',' << num(m.coverage) << ','
        << num(m.mean_bias) << ',' << num(m.mean_width) << ',' << num(m.mean_estimate) << ','
        << num(m.sd_estimate) << '\n';
  }
}

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricRow> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,estimand,", 0) != 0) {
    throw ParseError("metrics CSV: missing header", 1);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    // the estimand is quoted and may contain commas
    const auto q1 = line.find('"');
    const auto q2 = q1 == std::string::npos ? std::string::npos : line.find('"', q1 + 1);
    if (q2 == std::string::npos || q1 == 0) throw ParseError("metrics CSV: malformed row", lineno);
    MetricRow row;
    try {
      row.method = parse_method(line.substr(0, q1 - 1));
    } catch (const ValidationError& e) {
      throw ParseError(std::string("metrics CSV: ") + e.what(), lineno);
    }
    row.estimand = line.substr(q1 + 1, q2 - q1 - 1);
    const auto f = split(line.substr(q2 + 2), ',');
    if (f.size() != 9) throw ParseError("metrics CSV: expected 11 columns", lineno);
    try {
      auto& m = row.metrics;
      m.truth = parse_num(f[0]);
      m.replicates = static_cast<std::size_t>(std::stoul(f[1]));
      m.rmse = parse_num(f[2]);
      if (!f[3].empty()) m.rrmse = parse_num(f[3]);
      m.coverage = parse_num(f[4]);
      m.mean_bias = parse_num(f[5]);
      m.mean_width = parse_num(f[6]);
      m.mean_estimate = parse_num(f[7]);
      m.sd_estimate = parse_num(f[8]);
    } catch (const std::logic_error&) {
      throw ParseError("metrics CSV: bad number", lineno);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace mdam
