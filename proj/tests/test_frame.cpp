#include <doctest.h>

#include <numeric>
#include <sstream>

#include "mdam/error.hpp"
#include "mdam/frame.hpp"
#include "support.hpp"

using namespace mdam;

namespace {

Schema two_binaries() {
  Schema s;
  s.variables.push_back(VariableSpec::categorical("A", 2, true));
  s.variables.push_back(VariableSpec::categorical("B", 2));
  return s;
}

SampleFrame read(const std::string& csv, const Schema& s, double n = 100.0) {
  std::istringstream in(csv);
  LoadOptions lo;
  lo.population_size = n;
  return read_sample(in, s, lo);
}

bool has_issue(const ValidationReport& r, const std::string& needle) {
  for (const auto& i : r.issues) {
    if (i.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("fully observed file loads with no item missingness") {
  const auto f = read("A,B,weight,unit_nr\n1,2,2,0\n2,2,2,0\n1,1,2,0\n", two_binaries());
  REQUIRE(f.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(f.respondent(i));
    CHECK_FALSE(f.item_missing(i, 0));
    CHECK_FALSE(f.item_missing(i, 1));
  }
  CHECK(validate(f).ok());
}

TEST_CASE("unit nonrespondent row with empty cells") {
  const auto f = read("A,B,weight,unit_nr\n1,2,2,0\n,,4,1\n", two_binaries());
  CHECK_FALSE(f.respondent(1));
  CHECK(is_missing(f.values[0][1]));
  // R is only defined for respondents
  CHECK_FALSE(f.item_missing(1, 0));
  CHECK(f.nonrespondent_count() == 1);
}

TEST_CASE("unit nonrespondent with a value is rejected") {
  CHECK_THROWS_AS(read("A,B,weight,unit_nr\n1,2,2,0\n1,,4,1\n", two_binaries()), ValidationError);
  try {
    read("A,B,weight,unit_nr\n1,2,2,0\n1,,4,1\n", two_binaries());
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("ingestion errors carry line numbers") {
  try {
    read("A,B,weight,unit_nr\n1,2,2,0\n1,2,0\n", two_binaries());
    FAIL("expected parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(read("A,B,weight,unit_nr\n1,2,0,0\n", two_binaries()), ValidationError);
  CHECK_THROWS_AS(read("A,B,weight,unit_nr\n1,2,-1,0\n", two_binaries()), ValidationError);
  CHECK_THROWS_AS(read("A,B,weight,unit_nr\n3,2,2,0\n", two_binaries()), ValidationError);
  CHECK_THROWS_AS(read("A,weight,unit_nr\n1,2,0\n", two_binaries()), ParseError);
  CHECK_THROWS_AS(read("A,B,C,weight,unit_nr\n1,2,1,2,0\n", two_binaries()), ParseError);
}

TEST_CASE("labels map to codes") {
  Schema s;
  auto v = VariableSpec::categorical("S", 2);
  v.labels = {"male", "female"};
  s.variables.push_back(v);
  const auto f = read("S,weight,unit_nr\nfemale,2,0\nmale,2,0\n2,2,0\n", s);
  CHECK(f.values[0][0] == 2);
  CHECK(f.values[0][1] == 1);
  CHECK(f.values[0][2] == 2);
}

TEST_CASE("schema rejects continuous margins and bad ranges") {
  Schema s;
  auto v = VariableSpec::continuous("Y", 0, 1);
  v.in_margins = true;
  s.variables.push_back(v);
  CHECK_THROWS_AS(s.check(), ValidationError);
  Schema t;
  t.variables.push_back(VariableSpec::continuous("Y", 1, 1));
  CHECK_THROWS_AS(t.check(), ValidationError);
  Schema u;
  u.variables.push_back(VariableSpec::categorical("weight", 2));
  CHECK_THROWS_AS(u.check(), ValidationError);
}

TEST_CASE("margin validation") {
  const auto f = read("A,B,weight,unit_nr\n1,2,50,0\n,,50,1\n", two_binaries());
  AuxiliaryMargins ok;
  ok.margins.push_back({"A", {40, 60}, {1, 1}});
  CHECK(validate(f, ok).ok());

  AuxiliaryMargins off = ok;
  off.margins[0].totals = {40, 59};
  CHECK(has_issue(validate(f, off), "margin sum ≠ N"));

  AuxiliaryMargins none;
  CHECK(has_issue(validate(f, none), "margin missing"));

  AuxiliaryMargins negvar = ok;
  negvar.margins[0].variances = {-1, 1};
  CHECK(has_issue(validate(f, negvar), "variance"));

  AuxiliaryMargins blank = ok;
  blank.margins[0].variances = {kMissing, kMissing};
  CHECK(validate(f, blank).ok());
  CHECK(blank.has_unresolved_variances());
}

TEST_CASE("inclusion probability out of range") {
  auto f = read("A,B,weight,unit_nr\n1,2,2,0\n1,1,2,0\n", two_binaries());
  f.weights[0] = std::numeric_limits<double>::infinity();  // pi = 0
  CHECK(has_issue(validate(f), "inclusion probability out of range"));
  f.weights[0] = 0.5;  // pi = 2
  CHECK(has_issue(validate(f), "inclusion probability out of range"));
  f.weights[0] = 2;
  f.population_size = 1;
  CHECK(has_issue(validate(f), "population size smaller than sample"));
}

TEST_CASE("ht_weight_view") {
  SampleFrame f;
  f.schema = two_binaries();
  f.population_size = 100;
  f.weights = {10, 20, 30};
  f.unit_nr = {0, 0, 0};
  f.values.assign(2, std::vector<double>(3, 1.0));
  CHECK(ht_weight_view(f, WeightMode::design) == std::vector<double>{10, 20, 30});
  CHECK_THROWS_WITH_AS(ht_weight_view(f, WeightMode::fabricated), doctest::Contains("at least one"), ValidationError);

  SampleFrame g;
  g.schema = two_binaries();
  g.population_size = 100;
  g.weights = {30, 40, 5, 7};
  g.unit_nr = {0, 0, 1, 1};
  g.values.assign(2, {1, 1, kMissing, kMissing});
  const auto w = ht_weight_view(g, WeightMode::fabricated);
  CHECK(w == std::vector<double>{30, 40, 15, 15});
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(100).epsilon(1e-12));

  g.weights = {60, 50, 5, 7};
  CHECK_THROWS_WITH_AS(ht_weight_view(g, WeightMode::fabricated), doctest::Contains("respondent weights exceed N"),
                       ValidationError);
}

TEST_CASE("fabricated weights sum to N on random frames") {
  for (std::uint64_t s = 1; s <= 25; ++s) {
    const auto f = test::toy_frame(s);
    const auto w = ht_weight_view(f, WeightMode::fabricated);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    CHECK(std::abs(sum - f.population_size) <= 1e-9 * f.population_size);
  }
}

TEST_CASE("sample round trip preserves every cell and missingness") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto f = test::toy_frame(s, {.n = 60});
    std::ostringstream out;
    write_sample(out, f);
    std::istringstream in(out.str());
    LoadOptions lo;
    lo.population_size = f.population_size;
    const auto g = read_sample(in, f.schema, lo);
    REQUIRE(g.size() == f.size());
    CHECK(g.weights == f.weights);
    CHECK(g.unit_nr == f.unit_nr);
    CHECK(g.design == f.design);
    for (std::size_t j = 0; j < f.schema.size(); ++j) {
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double a = f.values[j][i], b = g.values[j][i];
        CHECK((is_missing(a) ? is_missing(b) : a == b));
      }
    }
    std::ostringstream again;
    write_sample(again, g);
    CHECK(again.str() == out.str());
  }
}

TEST_CASE("margins round trip with blank variances") {
  const Schema s = test::toy_schema();
  AuxiliaryMargins m;
  m.margins.push_back({"X1", {40, 60}, {12.5, kMissing}});
  m.margins.push_back({"X2", {30, 70}, {kMissing, kMissing}});
  std::ostringstream out;
  write_margins(out, m, s);
  std::istringstream in(out.str());
  const auto r = read_margins(in, s);
  REQUIRE(r.margins.size() == 2);
  CHECK(r.at("X1").totals == std::vector<double>{40, 60});
  CHECK(r.at("X1").variances[0] == 12.5);
  CHECK(is_missing(r.at("X1").variances[1]));
  CHECK(r.has_unresolved_variances());

  std::istringstream bad("variable,level,total,variance\nX9,1,3,\n");
  CHECK_THROWS_AS(read_margins(bad, s), ParseError);
}

TEST_CASE("completed dataset validation") {
  auto f = test::share(test::toy_frame(3, {.n = 30}));
  auto d = CompletedDataset::from_frame(f);
  CHECK_FALSE(validate(d).ok());  // holes remain
  for (std::size_t j = 0; j < d.values.size(); ++j) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (is_missing(d.values[j][i])) d.impute(j, i, f->schema.variables[j].is_categorical() ? 1.0 : 50.0, CellSource::item_imputed);
    }
  }
  CHECK(validate(d).ok());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!is_missing(f->values[0][i])) {
      d.values[0][i] = f->values[0][i] == 1 ? 2 : 1;
      break;
    }
  }
  CHECK(has_issue(validate(d), "observed value changed"));
}
