#include <doctest.h>

#include <map>
#include <set>

#include "mdam/error.hpp"
#include "mdam/hotdeck.hpp"
#include "support.hpp"

using namespace mdam;
using namespace mdam::test;

namespace {

// Respondents complete; nonrespondents have X1 and X2 filled at random.
CompletedDataset margined_filled(std::uint64_t seed, std::size_t n = 400, double unit_nr = 0.25) {
  ToyOptions o;
  o.n = n;
  o.item_nr = 0.0;
  o.unit_nr = unit_nr;
  const auto frame = share(toy_frame(seed, o));
  auto d = CompletedDataset::from_frame(frame);
  Rng rng(seed + 1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (frame->respondent(i)) continue;
    d.impute(0, i, rng.bernoulli(0.5) ? 1 : 2, CellSource::unit_imputed);
    d.impute(1, i, rng.bernoulli(0.5) ? 1 : 2, CellSource::unit_imputed);
  }
  return d;
}

const std::vector<std::size_t> kMatch{0, 1};

}  // namespace

TEST_CASE("donor index partitions respondents by pattern") {
  const auto d = margined_filled(1);
  const auto idx = build_index(d, kMatch);
  CHECK(idx.bucket_count() <= 4);
  std::set<std::size_t> seen;
  for (const auto& [key, units] : idx.buckets) {
    for (std::size_t i : units) {
      CHECK(d.source->respondent(i));
      CHECK(seen.insert(i).second);
      CHECK(d.values[0][i] == key[0]);
      CHECK(d.values[1][i] == key[1]);
    }
  }
  CHECK(seen.size() == d.source->respondent_count());
  // linear-scan oracle for each pattern
  for (int a = 1; a <= 2; ++a) {
    for (int b = 1; b <= 2; ++b) {
      std::vector<std::size_t> scan;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.source->respondent(i) && d.values[0][i] == a && d.values[1][i] == b) scan.push_back(i);
      }
      const auto got = idx.donors({a, b});
      CHECK(std::vector<std::size_t>(got.begin(), got.end()) == scan);
    }
  }
}

TEST_CASE("nonrespondents copy one matching donor jointly") {
  const auto d = margined_filled(2);
  Rng rng(3);
  HotdeckDiagnostics diag;
  const auto out = hotdeck_one(d, kMatch, rng, {}, &diag);
  CHECK(out.is_complete());
  CHECK(validate(out).ok());
  std::size_t k = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.source->respondent(i)) {
      for (std::size_t j = 0; j < 4; ++j) CHECK(out.values[j][i] == d.values[j][i]);
      continue;
    }
    const std::size_t donor = diag.donor[k++];
    CHECK(d.source->respondent(donor));
    CHECK(out.values[0][i] == d.values[0][i]);
    CHECK(out.values[1][i] == d.values[1][i]);
    CHECK(d.values[0][donor] == d.values[0][i]);
    CHECK(d.values[1][donor] == d.values[1][i]);
    CHECK(out.values[2][i] == d.values[2][donor]);
    CHECK(out.values[3][i] == d.values[3][donor]);
    CHECK(out.provenance[2][i] == CellSource::unit_imputed);
  }
  CHECK(diag.exact == d.source->nonrespondent_count());
}

TEST_CASE("donors are uniform within the cell") {
  // one nonrespondent, four matching respondents
  SampleFrame f;
  f.schema = toy_schema();
  f.values.assign(4, {});
  f.design.assign(1, {});
  for (int i = 0; i < 5; ++i) {
    f.weights.push_back(10.0 + i);
    f.design[0].push_back(1.0);
    f.unit_nr.push_back(i == 4);
    const double vals[4] = {1, 1, static_cast<double>(1 + i % 3), 10.0 * i};
    for (int j = 0; j < 4; ++j) f.values[j].push_back(i == 4 ? kMissing : vals[j]);
  }
  f.population_size = 100;
  auto d = CompletedDataset::from_frame(share(f));
  d.impute(0, 4, 1, CellSource::unit_imputed);
  d.impute(1, 4, 1, CellSource::unit_imputed);
  Rng rng(4);
  std::map<std::size_t, int> counts;
  const int draws = 10000;
  for (int r = 0; r < draws; ++r) {
    HotdeckDiagnostics diag;
    hotdeck_one(d, kMatch, rng, {}, &diag);
    ++counts[diag.donor[0]];
  }
  CHECK(counts.size() == 4);
  for (const auto& [donor, c] : counts) CHECK(std::abs(c / double(draws) - 0.25) < 3 * std::sqrt(0.25 * 0.75 / draws));

  SUBCASE("weighted donors follow the design weights") {
    HotdeckOptions o;
    o.weighted_donors = true;
    std::map<std::size_t, int> wc;
    for (int r = 0; r < draws; ++r) {
      HotdeckDiagnostics diag;
      hotdeck_one(d, kMatch, rng, o, &diag);
      ++wc[diag.donor[0]];
    }
    const double total = 10 + 11 + 12 + 13;
    for (const auto& [donor, c] : wc) {
      const double p = (10.0 + donor) / total;
      CHECK(std::abs(c / double(draws) - p) < 4 * std::sqrt(p * (1 - p) / draws));
    }
  }
}

TEST_CASE("fallback ladder drops the last matching variable then matches anyone") {
  SampleFrame f;
  f.schema = toy_schema();
  f.values.assign(4, {});
  f.design.assign(1, {});
  // respondents: (1,1), (2,1); nonrespondents will be (1,2) and (1,1)... and one with X1 = 2, X2 = 2
  const double resp[2][4] = {{1, 1, 1, 5}, {2, 1, 2, 6}};
  for (const auto& r : resp) {
    f.weights.push_back(10);
    f.design[0].push_back(1);
    f.unit_nr.push_back(0);
    for (int j = 0; j < 4; ++j) f.values[j].push_back(r[j]);
  }
  for (int i = 0; i < 2; ++i) {
    f.weights.push_back(10);
    f.design[0].push_back(1);
    f.unit_nr.push_back(1);
    for (int j = 0; j < 4; ++j) f.values[j].push_back(kMissing);
  }
  f.population_size = 40;
  auto d = CompletedDataset::from_frame(share(f));
  d.impute(0, 2, 1, CellSource::unit_imputed);
  d.impute(1, 2, 2, CellSource::unit_imputed);  // (1,2): drop X2 -> donor 0
  d.impute(0, 3, 1, CellSource::unit_imputed);
  d.impute(1, 3, 1, CellSource::unit_imputed);  // exact -> donor 0
  Rng rng(1);
  HotdeckDiagnostics diag;
  const auto out = hotdeck_one(d, kMatch, rng, {}, &diag);
  CHECK(diag.level[0] == DonorLevel::dropped_last);
  CHECK(diag.donor[0] == 0);
  CHECK(diag.level[1] == DonorLevel::exact);
  CHECK(out.values[3][2] == 5);

  // no respondent shares X1 = 1 with a three-variable match on X3 either
  const std::vector<std::size_t> match3{0, 1, 2};
  d.impute(2, 2, 3, CellSource::unit_imputed);
  d.impute(2, 3, 1, CellSource::unit_imputed);
  HotdeckDiagnostics diag3;
  hotdeck_one(d, match3, rng, {}, &diag3);
  CHECK(diag3.level[0] == DonorLevel::any);
}

TEST_CASE("empty match set resamples whole records") {
  const auto frame = share(toy_frame(5, [] {
    ToyOptions o;
    o.item_nr = 0.0;
    return o;
  }()));
  const auto d = CompletedDataset::from_frame(frame);
  Rng rng(2);
  HotdeckDiagnostics diag;
  const auto out = hotdeck_one(d, {}, rng, {}, &diag);
  CHECK(out.is_complete());
  std::size_t k = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (frame->respondent(i)) continue;
    const std::size_t donor = diag.donor[k++];
    for (std::size_t j = 0; j < 4; ++j) CHECK(out.values[j][i] == d.values[j][donor]);
  }
  CHECK(diag.exact == frame->nonrespondent_count());
}

TEST_CASE("hot deck is deterministic and rejects unimputed match values") {
  const auto d = margined_filled(7);
  std::vector<CompletedDataset> sets(3, d);
  const auto a = hotdeck_impute(sets, kMatch, 11, 1);
  const auto b = hotdeck_impute(sets, kMatch, 11, 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(a.datasets[l] == b.datasets[l]);
    CHECK(a.diagnostics[l].substream == "hotdeck/" + std::to_string(l));
  }
  CHECK_FALSE(a.datasets[0] == a.datasets[1]);

  auto bad = d;
  for (std::size_t i = 0; i < bad.size(); ++i) {
    if (!bad.source->respondent(i)) {
      bad.values[1][i] = kMissing;
      break;
    }
  }
  Rng rng(1);
  CHECK_THROWS_AS(hotdeck_one(bad, kMatch, rng), ValidationError);
}

TEST_CASE("a single-donor bucket copies that donor") {
  auto d = margined_filled(8, 300);
  // make unit 0 a respondent with a pattern nobody else has
  const auto& f = *d.source;
  std::size_t only = f.size();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.respondent(i) && only == f.size()) only = i;
  }
  REQUIRE(only < f.size());
  auto frame = f;
  const std::vector<std::size_t> match3{0, 1, 2};
  // every respondent except `only` gets X3 = 1; `only` keeps X3 = 3; one nonrespondent asks for (.., .., 3)
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (frame.respondent(i)) frame.values[2][i] = i == only ? 3 : 1;
  }
  auto data = CompletedDataset::from_frame(share(frame));
  std::size_t target = frame.size();
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (frame.respondent(i)) continue;
    data.impute(0, i, frame.values[0][only], CellSource::unit_imputed);
    data.impute(1, i, frame.values[1][only], CellSource::unit_imputed);
    data.impute(2, i, target == frame.size() ? 3 : 1, CellSource::unit_imputed);
    if (target == frame.size()) target = i;
  }
  for (int rep = 0; rep < 20; ++rep) {
    Rng rng(static_cast<std::uint64_t>(rep));
    const auto out = hotdeck_one(data, match3, rng);
    CHECK(out.values[3][target] == data.values[3][only]);
  }
}
