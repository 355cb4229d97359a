#include "commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "mdam/error.hpp"
#include "mdam/estimate.hpp"
#include "mdam/parallel.hpp"
#include "svg.hpp"

namespace mdam::cli {

using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path, const std::string& hint) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing '" + path.string() + "'; " + hint);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what(), 0);
  }
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json margins_json(const AuxiliaryMargins& m) {
  json out = json::array();
  for (const auto& vm : m.margins) {
    json var = json::array();
    for (const double v : vm.variances) var.push_back(finite_or_null(v));
    out.push_back({{"variable", vm.variable}, {"totals", vm.totals}, {"variances", var}});
  }
  return out;
}

json diagnostics_json(const MarginDiagnostics& d) {
  json j = {{"variable", d.variable},
            {"dataset", d.dataset + 1},
            {"method", d.method},
            {"target_totals", d.target_totals},
            {"factors", d.factors},
            {"redraws", d.total_redraws},
            {"safeguards", {{"renormalized", d.safeguards.renormalized}, {"clamped", d.safeguards.clamped}}},
            {"substreams", d.substreams}};
  if (d.solver_residual) {
    j["solver"] = {{"max_residual", *d.solver_residual},
                   {"iterations", d.solver_iterations},
                   {"dogleg_steps", d.solver_dogleg_steps},
                   {"solution_clamped", d.solution_clamped},
                   {"continuity_corrected", d.continuity_corrected}};
  }
  return j;
}

json hotdeck_json(const HotdeckDiagnostics& d) {
  return {{"dataset", d.dataset + 1},
          {"exact", d.exact},
          {"dropped_last", d.dropped_last},
          {"any", d.any},
          {"substream", d.substream}};
}

std::vector<Estimand> resolve_estimands(const std::vector<std::string>& names, const Schema& schema) {
  std::vector<std::string> list = names;
  if (list.empty()) {
    for (const auto& v : schema.variables) {
      if (v.is_categorical()) {
        for (int c = 1; c <= v.levels; ++c) list.push_back("total:" + v.name + "=" + std::to_string(c));
      } else {
        list.push_back("total:" + v.name);
      }
    }
  }
  std::vector<Estimand> out;
  for (const auto& n : list) out.push_back(Estimand::parse(n, schema));
  return out;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void cmd_simulate(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  StudyConfig study = cfg.study;
  study.seed = cfg.seed;
  study.threads = cfg.threads;
  study.items = cfg.pipeline.items;
  study.mode = cfg.pipeline.mode;
  study.estimands = cfg.estimands;
  const auto nr = cfg.nonresponse_or_default();

  Rng prng = Rng::substream(cfg.seed, "population");
  const Population pop = synth_population(cfg.population, prng);
  const StudyResult res = run_study(study, pop, nr);

  {
    auto out = open_out(cfg.out / "records.csv");
    write_records_csv(out, res);
  }
  {
    auto out = open_out(cfg.out / "metrics.csv");
    write_metrics_csv(out, res.metrics);
  }

  json failures = json::array();
  for (const auto& f : res.failures) failures.push_back({{"replicate", f.replicate}, {"message", f.message}});
  json estimands = json::array();
  for (const auto& e : res.estimands) estimands.push_back({{"name", e.name}, {"truth", *e.truth}});
  json methods = json::array();
  for (Method m : study.methods) methods.push_back(to_string(m));
  json item_rates = json::object();
  for (std::size_t j = 0; j < pop.schema.size(); ++j) item_rates[pop.schema.variables[j].name] = res.item_nr_rate[j];
  json substreams = json::array({"population"});
  for (std::size_t r = 0; r < study.replicates; ++r) {
    substreams.push_back("replicate/" + std::to_string(r));
    substreams.push_back("replicate/" + std::to_string(r) + "/impute");
  }
  write_json(cfg.out / "study.json", {{"seed", cfg.seed},
                                      {"replicates", study.replicates},
                                      {"datasets", study.items.datasets},
                                      {"methods", methods},
                                      {"population_size", res.population_size},
                                      {"expected_sample_size", pop.expected_sample_size()},
                                      {"mean_sample_size", res.mean_sample_size},
                                      {"unit_nonresponse_rate", res.unit_nr_rate},
                                      {"item_nonresponse_rate", item_rates},
                                      {"estimands", estimands},
                                      {"failures", failures},
                                      {"substreams", substreams}});

  // A demonstration input for `impute`: the first replicate's sample and the population margins.
  const SampleFrame sample = draw_replicate(pop, nr, cfg.seed, 0);
  {
    auto out = open_out(cfg.out / "sample.csv");
    write_sample(out, sample);
  }
  {
    auto out = open_out(cfg.out / "margins.csv");
    write_margins(out, population_margins(pop), pop.schema);
  }
  write_json(cfg.out / "impute.json", {{"seed", cfg.seed},
                                       {"out", "imputed"},
                                       {"schema", schema_to_json(pop.schema)},
                                       {"data",
                                        {{"sample", "sample.csv"},
                                         {"margins", "margins.csv"},
                                         {"population_size", res.population_size}}},
                                       {"imputation", {{"datasets", study.items.datasets}, {"cycles", study.items.cycles}}},
                                       {"estimands", json(StudyConfig::default_estimands())},
                                       {"margins", {{"method", "adj"}}}});
}

void cmd_impute(const RunConfig& cfg) {
  if (!cfg.schema) throw ValidationError("config has no 'schema' section (needed by impute)");
  if (cfg.sample.empty()) throw ValidationError("config has no data.sample path");
  if (!fs::exists(cfg.sample)) throw ValidationError("sample file '" + cfg.sample.string() + "' not found");
  const Method method = cfg.pipeline.method;
  AuxiliaryMargins margins;
  if (method != Method::ih) {
    if (cfg.margins.empty()) throw ValidationError("method " + std::string(to_string(method)) + " needs data.margins");
    if (!fs::exists(cfg.margins)) throw ValidationError("margins file '" + cfg.margins.string() + "' not found");
    margins = load_margins(cfg.margins.string(), *cfg.schema);
  }
  LoadOptions lo;
  lo.population_size = cfg.population_size;
  auto frame = load_sample(cfg.sample.string(), *cfg.schema, lo);
  if (!(frame.population_size > 0.0)) {
    // default N: the first margin's grand total, else the sum of design weights
    double n = 0.0;
    if (!margins.margins.empty()) {
      for (double t : margins.margins.front().totals) n += t;
    } else {
      for (double w : frame.weights) n += w;
    }
    frame.population_size = n;
  }
  const auto shared = std::make_shared<const SampleFrame>(std::move(frame));
  PipelineOptions opt = cfg.pipeline;
  opt.threads = cfg.threads;
  const auto res = run_pipeline(shared, margins, opt, cfg.seed);

  fs::create_directories(cfg.out);
  json files = json::array();
  for (std::size_t l = 0; l < res.datasets.size(); ++l) {
    const auto rep = validate(res.datasets[l]);
    if (!rep.ok()) throw NumericalError("completed dataset " + std::to_string(l + 1) + " invalid: " + rep.summary());
    const std::string name = "completed_" + std::to_string(l + 1) + ".csv";
    save_completed((cfg.out / name).string(), res.datasets[l]);
    files.push_back(name);
  }

  const auto& r = res.report;
  json mdiag = json::array();
  std::size_t flagged = 0;
  for (const auto& d : r.margins) {
    mdiag.push_back(diagnostics_json(d));
    flagged += d.safeguards.any();
  }
  json hdiag = json::array();
  std::size_t fallbacks = 0;
  for (const auto& d : r.hotdeck) {
    hdiag.push_back(hotdeck_json(d));
    fallbacks += d.dropped_last + d.any;
  }
  write_json(cfg.out / "report.json", {{"method", to_string(r.method)},
                                       {"seed", r.seed},
                                       {"datasets", res.datasets.size()},
                                       {"files", files},
                                       {"population_size", shared->population_size},
                                       {"sample_size", shared->size()},
                                       {"unit_nonrespondents", shared->nonrespondent_count()},
                                       {"margined", r.margined},
                                       {"working", to_string(r.mode)},
                                       {"weights", r.method == Method::yr ? "fabricated" : "design"},
                                       {"weight_sum", r.weight_sum},
                                       {"margins", margins_json(r.resolved_margins)},
                                       {"margin_imputation", mdiag},
                                       {"datasets_with_safeguards", flagged},
                                       {"hotdeck", hdiag},
                                       {"hotdeck_fallbacks", fallbacks},
                                       {"substreams", r.substreams},
                                       {"schema", schema_to_json(shared->schema)}});
}

void cmd_estimate(const RunConfig& cfg) {
  const fs::path dir = cfg.completed.empty() ? cfg.out : cfg.completed;
  const json report = read_json(dir / "report.json", "run `mdam impute` first");
  const Schema schema = cfg.schema ? *cfg.schema : parse_schema(report.at("schema"));
  const Method method = parse_method(report.at("method").get<std::string>());
  LoadOptions lo;
  lo.population_size = report.at("population_size").get<double>();
  lo.completed = true;

  std::vector<CompletedDataset> data;
  std::vector<std::vector<double>> weights;
  for (const auto& name : report.at("files")) {
    const fs::path p = dir / name.get<std::string>();
    if (!fs::exists(p)) throw ValidationError("missing '" + p.string() + "'; run `mdam impute` first");
    auto frame = std::make_shared<const SampleFrame>(load_sample(p.string(), schema, lo));
    weights.push_back(ht_weight_view(*frame, method == Method::yr ? WeightMode::fabricated : WeightMode::design));
    data.push_back(CompletedDataset::from_frame(frame));
    const auto rep = validate(data.back());
    if (!rep.ok()) throw ValidationError("'" + p.string() + "': " + rep.summary());
  }
  if (data.size() < 2) throw ValidationError("estimate needs at least 2 completed datasets");

  const auto estimands = resolve_estimands(cfg.estimands, schema);
  fs::create_directories(cfg.out);
  auto out = open_out(cfg.out / "estimates.csv");
  out << "estimand,qbar,ubar,b,total_variance,df,lower,upper\n";
  std::vector<PointVariance> per(data.size());
  for (const auto& e : estimands) {
    for (std::size_t l = 0; l < data.size(); ++l) per[l] = estimate(data[l], weights[l], e);
    const auto c = rubin_combine(per);
    out << '"' << e.name << "\"," << num(c.qbar) << ',' << num(c.ubar) << ',' << num(c.b) << ','
        << num(c.total_variance) << ',' << num(c.df) << ',' << num(c.lower) << ',' << num(c.upper) << '\n';
  }
}

void cmd_report(const RunConfig& cfg) {
  const fs::path path = cfg.metrics.empty() ? cfg.out / "metrics.csv" : cfg.metrics;
  std::ifstream in(path);
  if (!in) throw ValidationError("missing '" + path.string() + "'; run `mdam simulate` first");
  const auto rows = read_metrics_csv(in);
  if (rows.empty()) throw ValidationError("'" + path.string() + "' has no metric rows");

  std::vector<std::string> categories;
  std::vector<Method> methods;
  for (const auto& r : rows) {
    if (std::find(categories.begin(), categories.end(), r.estimand) == categories.end()) categories.push_back(r.estimand);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::vector<Series> rrmse, coverage;
  for (Method m : methods) {
    Series a{to_string(m), std::vector<std::optional<double>>(categories.size())};
    Series b = a;
    for (const auto& r : rows) {
      if (r.method != m) continue;
      const auto k = static_cast<std::size_t>(std::find(categories.begin(), categories.end(), r.estimand) - categories.begin());
      a.values[k] = r.metrics.rrmse;
      b.values[k] = r.metrics.coverage;
    }
    rrmse.push_back(std::move(a));
    coverage.push_back(std::move(b));
  }

  fs::create_directories(cfg.out);
  {
    auto out = open_out(cfg.out / "report_metrics.csv");
    write_metrics_csv(out, rows);
  }
  write_text(cfg.out / "rrmse.svg", bar_chart_svg("Relative RMSE by estimand", categories, rrmse, "rRMSE"));
  write_text(cfg.out / "coverage.svg",
             dot_chart_svg("Coverage of 95% intervals", categories, coverage, "coverage", 0.95));
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Multiple imputation with auxiliary population margins"};
  app.require_subcommand(1);
  std::string config_path;
  Overrides o;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out, method;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", seed, "master seed (overrides config)");
    sub->add_option("--threads", threads, "worker threads, 0 = all cores (overrides config)");
    sub->add_option("--out", out, "output directory (overrides config)");
    sub->add_option("--method", method, "margin method")->check(CLI::IsMember({"adj", "sys", "yr", "ih"}));
  };
  auto* sim = app.add_subcommand("simulate", "run the Monte Carlo study");
  auto* imp = app.add_subcommand("impute", "complete a sample with item, margin and hot-deck imputation");
  auto* est = app.add_subcommand("estimate", "pool estimates over completed datasets");
  auto* rep = app.add_subcommand("report", "metrics table and SVG charts from a study");
  for (auto* s : {sim, imp, est, rep}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    auto* sub = app.get_subcommands().front();
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (sub->count("--seed")) o.seed = seed;
    if (sub->count("--threads")) o.threads = threads;
    if (sub->count("--out")) o.out = out;
    if (sub->count("--method")) o.method = method;
    apply_overrides(cfg, o);
    if (sub == sim) cmd_simulate(cfg);
    else if (sub == imp) cmd_impute(cfg);
    else if (sub == est) cmd_estimate(cfg);
    else cmd_report(cfg);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"mdam"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mdam::cli
