#include "config.hpp"

#include <fstream>

#include "mdam/error.hpp"

namespace mdam::cli {

using nlohmann::json;

namespace {

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config: '") + key + "' has the wrong type");
  }
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ValidationError(std::string("config: '") + key + "' must be an object");
  return j.at(key);
}

ItemMethod parse_item_method(const std::string& s) {
  if (s == "logistic" || s == "bayes-logistic") return ItemMethod::bayes_logistic;
  if (s == "linear" || s == "bayes-linear") return ItemMethod::bayes_linear;
  if (s == "pmm") return ItemMethod::pmm;
  throw ValidationError("config: unknown item method '" + s + "'");
}

GeneratorEquation parse_equation(const json& e) {
  GeneratorEquation g;
  g.name = get<std::string>(e, "name", "");
  const auto type = get<std::string>(e, "type", "binary");
  if (type != "binary" && type != "continuous") throw ValidationError("config: equation type must be binary or continuous");
  g.binary = type == "binary";
  g.lo = get(e, "lo", 0.0);
  g.hi = get(e, "hi", 0.0);
  g.log_scale = get(e, "log_scale", false);
  g.intercept = get(e, "intercept", 0.0);
  g.size_coef = get(e, "size", 0.0);
  g.prev = get(e, "prev", std::vector<double>{});
  g.sd = get(e, "sd", 1.0);
  return g;
}

}  // namespace

NonresponseConfig RunConfig::nonresponse_or_default() const {
  return nonresponse ? *nonresponse : NonresponseConfig::defaults(population.equations.size());
}

Schema parse_schema(const json& j) {
  Schema s;
  if (!j.contains("variables") || !j.at("variables").is_array()) {
    throw ValidationError("config: schema.variables must be an array");
  }
  for (const auto& v : j.at("variables")) {
    const auto name = get<std::string>(v, "name", "");
    const auto type = get<std::string>(v, "type", "categorical");
    VariableSpec spec;
    if (type == "categorical") {
      spec = VariableSpec::categorical(name, get(v, "levels", 2), get(v, "margin", false));
      spec.labels = get(v, "labels", std::vector<std::string>{});
    } else if (type == "continuous") {
      spec = VariableSpec::continuous(name, get(v, "lo", 0.0), get(v, "hi", 0.0));
    } else {
      throw ValidationError("config: variable '" + name + "' has unknown type '" + type + "'");
    }
    s.variables.push_back(std::move(spec));
  }
  s.design_variables = get(j, "design", std::vector<std::string>{});
  s.check();
  return s;
}

json schema_to_json(const Schema& s) {
  json vars = json::array();
  for (const auto& v : s.variables) {
    json o = {{"name", v.name}};
    if (v.is_categorical()) {
      o["type"] = "categorical";
      o["levels"] = v.levels;
      if (v.in_margins) o["margin"] = true;
      if (!v.labels.empty()) o["labels"] = v.labels;
    } else {
      o["type"] = "continuous";
      o["lo"] = v.lo;
      o["hi"] = v.hi;
    }
    vars.push_back(std::move(o));
  }
  return {{"variables", vars}, {"design", s.design_variables}};
}

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  RunConfig c;
  c.base_dir = base_dir;
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  c.threads = get<unsigned>(j, "threads", c.threads);
  c.out = c.resolve(get<std::string>(j, "out", c.out.string()));
  if (j.contains("schema")) c.schema = parse_schema(j.at("schema"));

  const auto& data = section(j, "data");
  c.sample = c.resolve(get<std::string>(data, "sample", ""));
  c.margins = c.resolve(get<std::string>(data, "margins", ""));
  c.population_size = get(data, "population_size", 0.0);
  c.completed = c.resolve(get<std::string>(data, "completed", ""));
  c.metrics = c.resolve(get<std::string>(data, "metrics", ""));

  auto& items = c.pipeline.items;
  const auto& imp = section(j, "imputation");
  items.datasets = get(imp, "datasets", items.datasets);
  items.cycles = get(imp, "cycles", items.cycles);
  items.visit_order = get(imp, "visit_order", items.visit_order);
  for (const auto& [k, v] : get(imp, "methods", std::map<std::string, std::string>{})) {
    items.methods[k] = parse_item_method(v);
  }
  items.predictors = get(imp, "predictors", items.predictors);
  items.include_design = get(imp, "include_design", items.include_design);
  items.include_weight = get(imp, "include_weight", items.include_weight);
  items.pmm_donors = get(imp, "pmm_donors", items.pmm_donors);

  const auto& mar = section(j, "margins");
  if (mar.contains("method")) {
    c.pipeline.method = parse_method(get<std::string>(mar, "method", "adj"));
    c.method_set = true;
  }
  c.pipeline.margined = get(mar, "order", c.pipeline.margined);
  if (mar.contains("working")) c.pipeline.mode = parse_working_mode(get<std::string>(mar, "working", ""));
  c.pipeline.hotdeck.weighted_donors = get(mar, "weighted_donors", false);

  c.estimands = get(j, "estimands", c.estimands);

  const auto& st = section(j, "study");
  c.study.replicates = get(st, "replicates", c.study.replicates);
  if (st.contains("methods")) {
    c.study.methods.clear();
    for (const auto& m : get(st, "methods", std::vector<std::string>{})) c.study.methods.push_back(parse_method(m));
  }
  c.study.failure_cap = get(st, "failure_cap", c.study.failure_cap);

  const auto& pop = section(st, "population");
  auto& pc = c.population;
  pc.population_size = get(pop, "size", pc.population_size);
  pc.size_log_mean = get(pop, "size_log_mean", pc.size_log_mean);
  pc.size_log_sd = get(pop, "size_log_sd", pc.size_log_sd);
  pc.size_lo = get(pop, "size_lo", pc.size_lo);
  pc.size_hi = get(pop, "size_hi", pc.size_hi);
  pc.margined = get(pop, "margined", pc.margined);
  if (pop.contains("equations")) {
    pc.equations.clear();
    for (const auto& e : pop.at("equations")) pc.equations.push_back(parse_equation(e));
  }

  if (st.contains("nonresponse")) {
    const auto& nr = section(st, "nonresponse");
    auto n = NonresponseConfig::defaults(pc.equations.size());
    n.omega = get(nr, "omega", n.omega);
    n.unit_vars = get(nr, "unit_vars", n.unit_vars);
    n.phi0 = get(nr, "phi0", n.phi0);
    n.phi = get(nr, "phi", n.phi);
    n.phi_z = get(nr, "phi_z", n.phi_z);
    c.nonresponse = n;
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what(), 0);
  }
  return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.out) cfg.out = *o.out;
  if (o.method) {
    cfg.pipeline.method = parse_method(*o.method);
    cfg.method_set = true;
    cfg.study.methods = {cfg.pipeline.method};
  }
}

}  // namespace mdam::cli
