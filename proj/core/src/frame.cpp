#include "mdam/frame.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mdam/error.hpp"

namespace mdam {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char ch = line[k];
    if (quoted) {
      if (ch == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          cur.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool getline_stripped(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

// -- VariableSpec -------------------------------------------------------------

VariableSpec VariableSpec::categorical(std::string name, int levels, bool in_margins) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = VariableKind::categorical;
  v.levels = levels;
  v.in_margins = in_margins;
  return v;
}

VariableSpec VariableSpec::continuous(std::string name, double lo, double hi) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = VariableKind::continuous;
  v.levels = 0;
  v.lo = lo;
  v.hi = hi;
  return v;
}

bool VariableSpec::admits(double value) const noexcept {
  if (!std::isfinite(value)) return false;
  if (is_categorical()) {
    return value == std::floor(value) && value >= 1.0 && value <= static_cast<double>(levels);
  }
  return value >= lo && value <= hi;
}

double VariableSpec::parse_value(std::string_view token) const {
  if (is_categorical()) {
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (labels[k] == token) return static_cast<double>(k + 1);
    }
  }
  const auto v = parse_number(token);
  if (!v) {
    throw ValidationError("variable '" + name + "': cannot parse value '" + std::string(token) +
                          "'");
  }
  if (!admits(*v)) {
    if (is_categorical()) {
      throw ValidationError("variable '" + name + "': categorical value " + std::string(token) +
                            " outside 1.." + std::to_string(levels));
    }
    throw ValidationError("variable '" + name + "': value " + std::string(token) +
                          " outside [" + format_number(lo) + ", " + format_number(hi) + "]");
  }
  return *v;
}

std::string VariableSpec::format_value(double value) const {
  if (is_missing(value)) return {};
  if (is_categorical()) {
    const auto code = static_cast<std::size_t>(value);
    if (!labels.empty() && code >= 1 && code <= labels.size()) return labels[code - 1];
    return std::to_string(code);
  }
  return format_number(value);
}

// -- Schema -------------------------------------------------------------------

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t j = 0; j < variables.size(); ++j) {
    if (variables[j].name == name) return j;
  }
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto j = find(name)) return *j;
  throw ValidationError("unknown variable '" + std::string(name) + "'");
}

std::optional<std::size_t> Schema::find_design(std::string_view name) const {
  for (std::size_t k = 0; k < design_variables.size(); ++k) {
    if (design_variables[k] == name) return k;
  }
  return std::nullopt;
}

std::vector<std::size_t> Schema::margined() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < variables.size(); ++j) {
    if (variables[j].in_margins) out.push_back(j);
  }
  return out;
}

std::vector<std::size_t> Schema::unmargined() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < variables.size(); ++j) {
    if (!variables[j].in_margins) out.push_back(j);
  }
  return out;
}

void Schema::check() const {
  if (variables.empty()) throw ValidationError("schema has no variables");
  std::map<std::string, int> seen;
  auto reserved = [](const std::string& n) { return n == "weight" || n == "unit_nr"; };
  for (const auto& v : variables) {
    if (v.name.empty()) throw ValidationError("schema variable with empty name");
    if (reserved(v.name)) throw ValidationError("variable name '" + v.name + "' is reserved");
    if (seen[v.name]++) throw ValidationError("duplicate variable '" + v.name + "'");
    if (v.is_categorical()) {
      if (v.levels < 2) throw ValidationError("variable '" + v.name + "' needs >= 2 levels");
      if (!v.labels.empty() && v.labels.size() != static_cast<std::size_t>(v.levels)) {
        throw ValidationError("variable '" + v.name + "': label count differs from levels");
      }
    } else {
      if (!(v.lo < v.hi)) throw ValidationError("variable '" + v.name + "': range needs lo < hi");
      if (v.in_margins) {
        throw ValidationError("variable '" + v.name + "': margined variables must be categorical");
      }
    }
  }
  for (const auto& d : design_variables) {
    if (reserved(d) || seen[d]++) throw ValidationError("design column '" + d + "' clashes");
  }
}

// -- SampleFrame / CompletedDataset -------------------------------------------

std::size_t SampleFrame::respondent_count() const {
  return static_cast<std::size_t>(std::count(unit_nr.begin(), unit_nr.end(), std::uint8_t{0}));
}

CompletedDataset CompletedDataset::from_frame(std::shared_ptr<const SampleFrame> frame) {
  CompletedDataset d;
  d.values = frame->values;
  d.provenance.assign(frame->values.size(),
                      std::vector<CellSource>(frame->size(), CellSource::observed));
  d.source = std::move(frame);
  return d;
}

bool CompletedDataset::is_complete() const {
  for (const auto& col : values) {
    for (double v : col) {
      if (is_missing(v)) return false;
    }
  }
  return true;
}

bool CompletedDataset::operator==(const CompletedDataset& other) const {
  if (values.size() != other.values.size()) return false;
  for (std::size_t j = 0; j < values.size(); ++j) {
    const auto& a = values[j];
    const auto& b = other.values[j];
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const bool ma = is_missing(a[i]);
      if (ma != is_missing(b[i]) || (!ma && a[i] != b[i])) return false;
    }
  }
  return provenance == other.provenance;
}

// -- Margins ------------------------------------------------------------------

const VariableMargin* AuxiliaryMargins::find(std::string_view variable) const {
  for (const auto& m : margins) {
    if (m.variable == variable) return &m;
  }
  return nullptr;
}

VariableMargin* AuxiliaryMargins::find(std::string_view variable) {
  for (auto& m : margins) {
    if (m.variable == variable) return &m;
  }
  return nullptr;
}

const VariableMargin& AuxiliaryMargins::at(std::string_view variable) const {
  if (const auto* m = find(variable)) return *m;
  throw ValidationError("no margin for variable '" + std::string(variable) + "'");
}

bool AuxiliaryMargins::has_unresolved_variances() const {
  for (const auto& m : margins) {
    for (double v : m.variances) {
      if (is_missing(v)) return true;
    }
  }
  return false;
}

std::string ValidationReport::summary() const {
  std::string s;
  for (const auto& issue : issues) {
    if (!s.empty()) s += "; ";
    s += issue;
  }
  return s;
}

// -- CSV ingestion --------------------------------------------------------------

SampleFrame read_sample(std::istream& in, const Schema& schema, const LoadOptions& options) {
  schema.check();
  std::string line;
  if (!getline_stripped(in, line)) throw ParseError("empty file, header row expected", 1);
  const auto header = split_csv_line(line, options.delimiter);

  const std::size_t p = schema.size();
  const std::size_t q = schema.design_variables.size();
  // Column role: [0, p) variable, [p, p+q) design, p+q weight, p+q+1 unit_nr.
  std::vector<std::size_t> role(header.size());
  std::vector<int> hits(p + q + 2, 0);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = trim(header[c]);
    std::size_t r;
    if (name == "weight") {
      r = p + q;
    } else if (name == "unit_nr") {
      r = p + q + 1;
    } else if (auto j = schema.find(name)) {
      r = *j;
    } else if (auto k = schema.find_design(name)) {
      r = p + *k;
    } else {
      throw ParseError("unknown column '" + name + "'", 1);
    }
    if (hits[r]++) throw ParseError("duplicate column '" + name + "'", 1);
    role[c] = r;
  }
  for (std::size_t r = 0; r < hits.size(); ++r) {
    if (hits[r] == 0) {
      std::string name = r < p       ? schema.variables[r].name
                         : r < p + q ? schema.design_variables[r - p]
                         : r == p + q ? std::string("weight")
                                      : std::string("unit_nr");
      throw ParseError("missing column '" + name + "'", 1);
    }
  }

  SampleFrame frame;
  frame.schema = schema;
  frame.population_size = options.population_size;
  frame.values.assign(p, {});
  frame.design.assign(q, {});

  std::size_t lineno = 1;
  while (getline_stripped(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line, options.delimiter);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       lineno);
    }
    auto where = [&](const std::string& msg) {
      return ValidationError("line " + std::to_string(lineno) + ": " + msg);
    };
    std::vector<double> row(p, kMissing);
    std::vector<double> drow(q, kMissing);
    double weight = kMissing;
    int unr = -1;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto tok = trim(fields[c]);
      const std::size_t r = role[c];
      if (r < p) {
        if (tok.empty()) continue;
        try {
          row[r] = schema.variables[r].parse_value(tok);
        } catch (const ValidationError& e) {
          throw where(e.what());
        }
      } else if (r < p + q) {
        const auto v = parse_number(tok);
        if (!v) throw where("design column '" + schema.design_variables[r - p] + "' must be numeric");
        drow[r - p] = *v;
      } else if (r == p + q) {
        const auto v = parse_number(tok);
        if (!v) throw where("unparseable weight '" + tok + "'");
        if (!(*v > 0.0)) throw where("weight must be positive");
        weight = *v;
      } else {
        if (tok == "0") {
          unr = 0;
        } else if (tok == "1") {
          unr = 1;
        } else {
          throw where("unit_nr must be 0 or 1");
        }
      }
    }
    if (unr == 1 && !options.completed) {
      for (std::size_t j = 0; j < p; ++j) {
        if (!is_missing(row[j])) {
          throw where("unit nonrespondent has a value for '" + schema.variables[j].name + "'");
        }
      }
    }
    for (std::size_t j = 0; j < p; ++j) frame.values[j].push_back(row[j]);
    for (std::size_t k = 0; k < q; ++k) frame.design[k].push_back(drow[k]);
    frame.weights.push_back(weight);
    frame.unit_nr.push_back(static_cast<std::uint8_t>(unr));
  }
  return frame;
}

SampleFrame load_sample(const std::string& path, const Schema& schema, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open sample file '" + path + "'", 0);
  return read_sample(in, schema, options);
}

namespace {

void write_rows(std::ostream& out, const Schema& schema,
                const std::vector<std::vector<double>>& values,
                const std::vector<std::vector<double>>& design, const std::vector<double>& weights,
                const std::vector<std::uint8_t>& unit_nr) {
  bool first = true;
  auto sep = [&] {
    if (!first) out << ',';
    first = false;
  };
  for (const auto& v : schema.variables) {
    sep();
    out << v.name;
  }
  for (const auto& d : schema.design_variables) {
    sep();
    out << d;
  }
  sep();
  out << "weight,unit_nr\n";
  for (std::size_t i = 0; i < weights.size(); ++i) {
    first = true;
    for (std::size_t j = 0; j < schema.size(); ++j) {
      sep();
      out << schema.variables[j].format_value(values[j][i]);
    }
    for (const auto& col : design) {
      sep();
      out << format_number(col[i]);
    }
    sep();
    out << format_number(weights[i]) << ',' << static_cast<int>(unit_nr[i]) << '\n';
  }
}

}  // namespace

void write_sample(std::ostream& out, const SampleFrame& frame) {
  write_rows(out, frame.schema, frame.values, frame.design, frame.weights, frame.unit_nr);
}

void write_completed(std::ostream& out, const CompletedDataset& data) {
  const auto& f = *data.source;
  write_rows(out, f.schema, data.values, f.design, f.weights, f.unit_nr);
}

void save_completed(const std::string& path, const CompletedDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_completed(out, data);
}

AuxiliaryMargins read_margins(std::istream& in, const Schema& schema) {
  std::string line;
  if (!getline_stripped(in, line)) throw ParseError("empty margins file", 1);
  const auto header = split_csv_line(line, ',');
  int col_var = -1, col_level = -1, col_total = -1, col_var_v = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto h = trim(header[c]);
    if (h == "variable") col_var = static_cast<int>(c);
    else if (h == "level") col_level = static_cast<int>(c);
    else if (h == "total") col_total = static_cast<int>(c);
    else if (h == "variance") col_var_v = static_cast<int>(c);
    else throw ParseError("unknown margins column '" + h + "'", 1);
  }
  if (col_var < 0 || col_level < 0 || col_total < 0) {
    throw ParseError("margins header needs variable, level, total", 1);
  }

  AuxiliaryMargins margins;
  std::size_t lineno = 1;
  while (getline_stripped(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line, ',');
    if (f.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields", lineno);
    }
    const auto name = trim(f[col_var]);
    const auto j = schema.find(name);
    if (!j) throw ParseError("unknown variable '" + name + "'", lineno);
    const auto& spec = schema.variables[*j];
    if (!spec.is_categorical()) throw ParseError("margin on non-categorical '" + name + "'", lineno);
    double level;
    try {
      level = spec.parse_value(trim(f[col_level]));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    const auto total = parse_number(trim(f[col_total]));
    if (!total) throw ParseError("unparseable total", lineno);
    double variance = kMissing;
    if (col_var_v >= 0) {
      const auto tok = trim(f[col_var_v]);
      if (!tok.empty()) {
        const auto v = parse_number(tok);
        if (!v) throw ParseError("unparseable variance", lineno);
        variance = *v;
      }
    }
    auto* m = margins.find(name);
    if (!m) {
      margins.margins.push_back({name, std::vector<double>(spec.levels, kMissing),
                                 std::vector<double>(spec.levels, kMissing)});
      m = &margins.margins.back();
    }
    const auto c = static_cast<std::size_t>(level) - 1;
    if (!is_missing(m->totals[c])) throw ParseError("duplicate margin level", lineno);
    m->totals[c] = *total;
    m->variances[c] = variance;
  }
  return margins;
}

AuxiliaryMargins load_margins(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open margins file '" + path + "'", 0);
  return read_margins(in, schema);
}

void write_margins(std::ostream& out, const AuxiliaryMargins& margins, const Schema& schema) {
  out << "variable,level,total,variance\n";
  for (const auto& m : margins.margins) {
    const auto& spec = schema.variables[schema.index_of(m.variable)];
    for (std::size_t c = 0; c < m.totals.size(); ++c) {
      out << m.variable << ',' << spec.format_value(static_cast<double>(c + 1)) << ','
          << format_number(m.totals[c]) << ',';
      if (!is_missing(m.variances[c])) out << format_number(m.variances[c]);
      out << '\n';
    }
  }
}

// -- Validation -----------------------------------------------------------------

ValidationReport validate(const SampleFrame& frame) {
  ValidationReport rep;
  auto add = [&](std::string s) { rep.issues.push_back(std::move(s)); };
  try {
    frame.schema.check();
  } catch (const ValidationError& e) {
    add(e.what());
    return rep;
  }
  const std::size_t n = frame.size();
  if (frame.unit_nr.size() != n || frame.values.size() != frame.schema.size() ||
      frame.design.size() != frame.schema.design_variables.size()) {
    add("frame column shapes do not match the schema");
    return rep;
  }
  for (const auto& col : frame.values) {
    if (col.size() != n) {
      add("frame column lengths differ");
      return rep;
    }
  }
  if (frame.population_size < static_cast<double>(n)) add("population size smaller than sample");
  for (std::size_t i = 0; i < n; ++i) {
    const double w = frame.weights[i];
    const double pi = 1.0 / w;
    if (!(w > 0.0)) {
      add("unit " + std::to_string(i) + ": weight must be positive");
    } else if (!(pi > 0.0 && pi <= 1.0 + 1e-12)) {
      add("unit " + std::to_string(i) + ": inclusion probability out of range");
    }
    if (frame.unit_nr[i] > 1) add("unit " + std::to_string(i) + ": unit_nr must be 0 or 1");
    for (std::size_t j = 0; j < frame.schema.size(); ++j) {
      const double v = frame.values[j][i];
      if (is_missing(v)) continue;
      if (frame.unit_nr[i] == 1) {
        add("unit " + std::to_string(i) + ": unit nonrespondent has a value for '" +
            frame.schema.variables[j].name + "'");
      } else if (!frame.schema.variables[j].admits(v)) {
        add("unit " + std::to_string(i) + ": value of '" + frame.schema.variables[j].name +
            "' outside its support");
      }
    }
    for (std::size_t k = 0; k < frame.design.size(); ++k) {
      if (!std::isfinite(frame.design[k][i])) {
        add("unit " + std::to_string(i) + ": design column '" +
            frame.schema.design_variables[k] + "' not finite");
      }
    }
  }
  return rep;
}

ValidationReport validate(const SampleFrame& frame, const AuxiliaryMargins& margins) {
  ValidationReport rep = validate(frame);
  const double n_pop = frame.population_size;
  for (std::size_t j : frame.schema.margined()) {
    const auto& spec = frame.schema.variables[j];
    const auto* m = margins.find(spec.name);
    if (!m) {
      rep.issues.push_back("margin missing for '" + spec.name + "'");
      continue;
    }
    if (m->totals.size() != static_cast<std::size_t>(spec.levels)) {
      rep.issues.push_back("margin for '" + spec.name + "' has wrong level count");
      continue;
    }
    double sum = 0.0;
    bool complete = true;
    for (std::size_t c = 0; c < m->totals.size(); ++c) {
      const double t = m->totals[c];
      if (is_missing(t)) {
        rep.issues.push_back("margin for '" + spec.name + "' level " + std::to_string(c + 1) +
                             " missing");
        complete = false;
        continue;
      }
      if (t < 0.0) rep.issues.push_back("margin for '" + spec.name + "' has a negative total");
      sum += t;
      const double v = m->variances[c];
      if (!is_missing(v) && !(std::isfinite(v) && v >= 0.0)) {
        rep.issues.push_back("margin variance for '" + spec.name + "' not finite and >= 0");
      }
    }
    if (complete && std::abs(sum - n_pop) > 1e-9 * std::max(1.0, n_pop)) {
      rep.issues.push_back("margin sum ≠ N for '" + spec.name + "'");
    }
  }
  for (const auto& m : margins.margins) {
    const auto j = frame.schema.find(m.variable);
    if (!j || !frame.schema.variables[*j].in_margins) {
      rep.issues.push_back("margin given for non-margined variable '" + m.variable + "'");
    }
  }
  return rep;
}

ValidationReport validate(const CompletedDataset& data) {
  ValidationReport rep;
  const auto& frame = *data.source;
  const auto& schema = frame.schema;
  if (data.values.size() != schema.size()) {
    rep.issues.push_back("dataset column count differs from schema");
    return rep;
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& spec = schema.variables[j];
    for (std::size_t i = 0; i < frame.size(); ++i) {
      const double v = data.values[j][i];
      const double src = frame.values[j][i];
      const std::string cell = "unit " + std::to_string(i) + " '" + spec.name + "'";
      if (is_missing(v)) {
        rep.issues.push_back(cell + ": missing in completed data");
        continue;
      }
      if (!spec.admits(v)) rep.issues.push_back(cell + ": value outside support");
      if (!is_missing(src) && src != v) rep.issues.push_back(cell + ": observed value changed");
      if (!is_missing(src) && data.provenance[j][i] != CellSource::observed) {
        rep.issues.push_back(cell + ": observed cell marked imputed");
      }
    }
  }
  return rep;
}

// -- Weights -------------------------------------------------------------------

std::vector<double> ht_weight_view(const SampleFrame& frame, WeightMode mode) {
  std::vector<double> w = frame.weights;
  if (mode == WeightMode::design) return w;
  double resp_sum = 0.0;
  std::size_t nonresp = 0;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (frame.respondent(i)) {
      resp_sum += frame.weights[i];
    } else {
      ++nonresp;
    }
  }
  if (nonresp == 0) throw ValidationError("fabricated weights need at least one unit nonrespondent");
  const double constant = (frame.population_size - resp_sum) / static_cast<double>(nonresp);
  if (!(constant > 0.0)) throw ValidationError("respondent weights exceed N");
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (!frame.respondent(i)) w[i] = constant;
  }
  return w;
}

}  // namespace mdam
