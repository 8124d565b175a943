#include <algorithm>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "excision/scoring.hpp"
#include "oracles.hpp"

using namespace excision;

namespace {

ExpertDataset random_dataset(std::uint32_t seed, std::size_t n = 12) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> a(5, 20), c(0.05, 0.5), s(1, 10);
  std::vector<RatingRecord> r;
  for (std::size_t i = 0; i < n; ++i) r.push_back({a(rng), c(rng), s(rng)});
  return ExpertDataset(std::move(r));
}

}  // namespace

TEST(Knn, ExactMatchReturnsThatScore) {
  const auto d = random_dataset(1);
  for (const auto& r : d.records()) EXPECT_EQ(knn_predict(d, r.amplitude, r.consistency), r.score);
}

TEST(Knn, TwoRecordExample) {
  const ExpertDataset d({{1.0, 0.2, 3.0}, {5.0, 0.9, 9.0}});
  EXPECT_EQ(knn_predict(d, 1.1, 0.25), 3.0);
}

TEST(Knn, EquidistantTieGoesToLowerIndex) {
  // Amplitudes are integers summing to 110, so the mean is exactly 11 and
  // records 2 and 7 sit at exactly -1/s and +1/s from the query.
  const std::vector<double> amp{5, 17, 10, 6, 16, 8, 14, 12, 10, 12};
  const std::vector<double> cons{0.1, 0.9, 0.5, 0.3, 0.7, 0.2, 0.8, 0.5, 0.4, 0.6};
  std::vector<RatingRecord> r;
  for (std::size_t i = 0; i < amp.size(); ++i) r.push_back({amp[i], cons[i], 1.0 + static_cast<double>(i)});
  const ExpertDataset d(r);
  ASSERT_EQ(d.amplitude_mean(), 11.0);
  EXPECT_EQ(knn_predict(d, 11.0, 0.5), 3.0);
}

TEST(Knn, AllNeighboursGiveGlobalMean) {
  const auto d = random_dataset(2);
  double m = 0.0;
  for (const auto& r : d.records()) m += r.score;
  m /= static_cast<double>(d.size());
  EXPECT_NEAR(knn_predict(d, 3.0, 0.9, d.size()), m, 1e-12);
  EXPECT_NEAR(knn_predict(d, 30.0, 0.1, d.size()), m, 1e-12);
}

TEST(Knn, InvariantToAffineRescaling) {
  const auto d = random_dataset(3);
  std::vector<RatingRecord> scaled;
  for (const auto& r : d.records()) scaled.push_back({4.0 * r.amplitude - 7.0, r.consistency, r.score});
  const ExpertDataset ds(scaled);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> a(5, 20), c(0.05, 0.5);
  for (int i = 0; i < 50; ++i) {
    const double qa = a(rng), qc = c(rng);
    EXPECT_EQ(knn_predict(d, qa, qc, 2), knn_predict(ds, 4.0 * qa - 7.0, qc, 2));
  }
}

TEST(Knn, ValidatesInputs) {
  EXPECT_THROW(ExpertDataset({}), InvalidParameter);
  const auto d = random_dataset(5, 4);
  EXPECT_THROW(knn_predict(d, 1, 1, 0), InvalidParameter);
  EXPECT_THROW(knn_predict(d, 1, 1, 5), InvalidParameter);
}

TEST(Objective, SingleFeatureIsProjection) {
  ExcisionFeatures f{1.0, 0.2, 0.7, 10.0, 0.14};
  const auto spec = ObjectiveSpec::single(FeatureName::Smoothness);
  EXPECT_EQ(evaluate_objective(spec, f), 0.7);
  f.amplitude = 99.0;
  f.consistency = 0.9;
  f.energy = -1.0;
  EXPECT_EQ(evaluate_objective(spec, f), 0.7);
}

TEST(Objective, ExpertUsesKnn) {
  DatasetRegistry reg;
  reg.emplace("d", random_dataset(6));
  const auto& rec = reg.at("d").records()[4];
  ExcisionFeatures f;
  f.amplitude = rec.amplitude;
  f.consistency = rec.consistency;
  EXPECT_EQ(evaluate_objective(ObjectiveSpec::expert("d"), f, reg), rec.score);
  EXPECT_THROW(evaluate_objective(ObjectiveSpec::expert("missing"), f, reg), LookupError);
}

TEST(Objective, EnergyOfSingleRegime) {
  RegimeModel m;
  m.K = 1;
  m.v = {1.0};
  m.sigma2 = {0.1};
  m.Q = {{1.0}};
  m.pi_stat = {1.0};
  const auto f = extract_features(m, MaterialParams{5.0, 2.0}, 10.0);
  EXPECT_NEAR(evaluate_objective(ObjectiveSpec::single(FeatureName::Energy), f), 20.0, 1e-12);
}

TEST(Objective, FeatureNamesRoundTrip) {
  for (auto f : {FeatureName::Amplitude, FeatureName::Consistency, FeatureName::Smoothness, FeatureName::Energy,
                 FeatureName::Confidence})
    EXPECT_EQ(parse_feature(to_string(f)), f);
  EXPECT_FALSE(parse_feature("roughness"));
}

TEST(SynthExpert, ProfileAPeaksInside) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto d = synth_expert_dataset(ExpertProfile::A, 15, s);
    const auto& r = d.records();
    const auto best = std::max_element(r.begin(), r.end(), [](auto& a, auto& b) { return a.score < b.score; });
    const auto [lo, hi] = std::minmax_element(r.begin(), r.end(), [](auto& a, auto& b) {
      return a.consistency < b.consistency;
    });
    EXPECT_GT(best->consistency, lo->consistency);
    EXPECT_LT(best->consistency, hi->consistency);
  }
}

TEST(SynthExpert, BoundaryProfilesPeakAtHighConsistency) {
  for (auto p : {ExpertProfile::B, ExpertProfile::C, ExpertProfile::D}) {
    const auto d = synth_expert_dataset(p, 15, 3);
    const auto& r = d.records();
    std::vector<double> c;
    for (const auto& x : r) c.push_back(x.consistency);
    std::sort(c.begin(), c.end());
    const double q3 = c[(3 * c.size()) / 4];
    const auto best = std::max_element(r.begin(), r.end(), [](auto& a, auto& b) { return a.score < b.score; });
    EXPECT_GE(best->consistency, q3);
  }
}

TEST(SynthExpert, SizeAndScoreRange) {
  const auto d = synth_expert_dataset(ExpertProfile::C, 15, 1);
  EXPECT_EQ(d.size(), 15u);
  for (const auto& r : d.records()) {
    EXPECT_GE(r.score, 1.0);
    EXPECT_LE(r.score, 10.0);
  }
  EXPECT_THROW(synth_expert_dataset(ExpertProfile::A, 4, 1), InvalidParameter);
}

TEST(SynthExpert, IsDeterministic) {
  const auto a = synth_expert_dataset(ExpertProfile::D, 15, 9), b = synth_expert_dataset(ExpertProfile::D, 15, 9);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.records()[i].score, b.records()[i].score);
}
