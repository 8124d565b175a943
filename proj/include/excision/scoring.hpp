#pragma once

// Objective functions over excision features: a single feature, or a 1-NN
// surrogate of an expert's rating in (amplitude, consistency) space.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "excision/error.hpp"
#include "excision/features.hpp"
#include "excision/random.hpp"
#include "excision/signal.hpp"

namespace excision {

struct RatingRecord {
  double amplitude = 0.0;
  double consistency = 0.0;
  double score = 0.0;
};

/// Expert-labelled feature points with per-dimension z-score statistics.
class ExpertDataset {
 public:
  explicit ExpertDataset(std::vector<RatingRecord> records) : records_(std::move(records)) {
    if (records_.empty()) throw InvalidParameter("expert dataset is empty");
    std::vector<double> a, c;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (!std::isfinite(r.amplitude) || !std::isfinite(r.consistency) || !std::isfinite(r.score))
        throw InvalidParameter("expert record " + std::to_string(i) + " has non-finite values");
      a.push_back(r.amplitude);
      c.push_back(r.consistency);
    }
    amp_mean_ = mean(a);
    cons_mean_ = mean(c);
    // A dimension with no spread contributes nothing to distances; unit scale keeps it finite.
    const double sa = stddev(a), sc = stddev(c);
    amp_std_ = sa > 0.0 ? sa : 1.0;
    cons_std_ = sc > 0.0 ? sc : 1.0;
  }

  [[nodiscard]] const std::vector<RatingRecord>& records() const noexcept { return records_; }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
  [[nodiscard]] double amplitude_mean() const noexcept { return amp_mean_; }
  [[nodiscard]] double amplitude_std() const noexcept { return amp_std_; }
  [[nodiscard]] double consistency_mean() const noexcept { return cons_mean_; }
  [[nodiscard]] double consistency_std() const noexcept { return cons_std_; }

 private:
  std::vector<RatingRecord> records_;
  double amp_mean_ = 0.0, amp_std_ = 1.0, cons_mean_ = 0.0, cons_std_ = 1.0;
};

/// Mean score of the k nearest records in z-scored (amplitude, consistency)
/// space. Equal distances resolve to the lower record index.
inline double knn_predict(const ExpertDataset& data, double amplitude, double consistency, std::size_t k = 1) {
  if (data.size() == 0) throw InvalidParameter("knn_predict: empty dataset");
  if (k < 1 || k > data.size())
    throw InvalidParameter("knn_predict: k=" + std::to_string(k) + " must be in [1, " + std::to_string(data.size()) +
                           "]");
  const double qa = (amplitude - data.amplitude_mean()) / data.amplitude_std();
  const double qc = (consistency - data.consistency_mean()) / data.consistency_std();
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records()[i];
    const double da = (r.amplitude - data.amplitude_mean()) / data.amplitude_std() - qa;
    const double dc = (r.consistency - data.consistency_mean()) / data.consistency_std() - qc;
    dist.emplace_back(da * da + dc * dc, i);
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) acc += data.records()[dist[j].second].score;
  return acc / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Objectives

enum class FeatureName { Amplitude, Consistency, Smoothness, Energy, Confidence };

inline std::optional<FeatureName> parse_feature(std::string_view s) {
  if (s == "amplitude") return FeatureName::Amplitude;
  if (s == "consistency") return FeatureName::Consistency;
  if (s == "smoothness") return FeatureName::Smoothness;
  if (s == "energy") return FeatureName::Energy;
  if (s == "confidence") return FeatureName::Confidence;
  return std::nullopt;
}

inline std::string_view to_string(FeatureName f) {
  switch (f) {
    case FeatureName::Amplitude: return "amplitude";
    case FeatureName::Consistency: return "consistency";
    case FeatureName::Smoothness: return "smoothness";
    case FeatureName::Energy: return "energy";
    case FeatureName::Confidence: return "confidence";
  }
  return "?";
}

inline double feature_value(const ExcisionFeatures& f, FeatureName name) {
  switch (name) {
    case FeatureName::Amplitude: return f.amplitude;
    case FeatureName::Consistency: return f.consistency;
    case FeatureName::Smoothness: return f.smoothness;
    case FeatureName::Energy: return f.energy;
    case FeatureName::Confidence: return f.confidence;
  }
  throw InvalidParameter("unknown feature");
}

struct ObjectiveSpec {
  enum class Kind { SingleFeature, Expert };
  Kind kind = Kind::SingleFeature;
  FeatureName feature = FeatureName::Smoothness;
  std::string dataset_id;
  std::size_t k = 1;

  static ObjectiveSpec single(FeatureName f) { return {Kind::SingleFeature, f, {}, 1}; }
  static ObjectiveSpec expert(std::string id, std::size_t k = 1) {
    return {Kind::Expert, FeatureName::Smoothness, std::move(id), k};
  }
};

/// Named expert datasets available to objective evaluation.
using DatasetRegistry = std::map<std::string, ExpertDataset, std::less<>>;

inline double evaluate_objective(const ObjectiveSpec& spec, const ExcisionFeatures& features,
                                 const DatasetRegistry& datasets = {}) {
  if (spec.kind == ObjectiveSpec::Kind::SingleFeature) return feature_value(features, spec.feature);
  const auto it = datasets.find(spec.dataset_id);
  if (it == datasets.end()) throw LookupError("unknown expert dataset id '" + spec.dataset_id + "'");
  return knn_predict(it->second, features.amplitude, features.consistency, spec.k);
}

// ---------------------------------------------------------------------------
// Synthetic experts

enum class ExpertProfile { A, B, C, D };

inline std::optional<ExpertProfile> parse_profile(std::string_view s) {
  if (s == "A" || s == "a") return ExpertProfile::A;
  if (s == "B" || s == "b") return ExpertProfile::B;
  if (s == "C" || s == "c") return ExpertProfile::C;
  if (s == "D" || s == "d") return ExpertProfile::D;
  return std::nullopt;
}

/// Region of feature space the synthetic trials cover. Defaults bracket what
/// the default simulator produces over rho in [1, 10].
struct FeatureBox {
  double amplitude_lo = 8.5;
  double amplitude_hi = 17.0;
  double consistency_lo = 0.09;
  double consistency_hi = 0.33;

  void validate() const {
    detail::require(amplitude_hi > amplitude_lo && consistency_hi > consistency_lo,
                    "feature box bounds must be increasing");
  }

  friend bool operator==(const FeatureBox&, const FeatureBox&) = default;
};

/// Rating in [1, 10] of a trial at normalised coordinates (an, cn) in [0,1]^2.
/// A prefers intermediate consistency; B-D reward consistency and penalise
/// amplitude with different weightings.
inline double profile_score(ExpertProfile p, double an, double cn) {
  double u = 0.0;
  switch (p) {
    case ExpertProfile::A: u = std::exp(-0.5 * std::pow((cn - 0.5) / 0.2, 2)); break;
    case ExpertProfile::B: u = 0.8 * cn + 0.2 * (1.0 - an); break;
    case ExpertProfile::C: u = 0.5 * cn + 0.5 * (1.0 - an); break;
    case ExpertProfile::D: u = 0.6 * cn * cn + 0.4 * (1.0 - an); break;
  }
  return 1.0 + 9.0 * std::clamp(u, 0.0, 1.0);
}

/// n rated trials with consistency stratified across the box and amplitude
/// trading off against it, as in recorded excisions where steadier cuts run
/// at lower force. Ratings carry small seeded noise and are clipped to [1, 10].
inline ExpertDataset synth_expert_dataset(ExpertProfile profile, std::size_t n, std::uint64_t seed,
                                          const FeatureBox& box = {}) {
  detail::require(n >= 5, "synth_expert_dataset needs n >= 5");
  box.validate();
  Rng rng = make_rng(seed, stream::kExpert);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<RatingRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cn = (static_cast<double>(i) + u01(rng)) / static_cast<double>(n);
    const double an = std::clamp(1.0 - cn + 0.1 * g(rng), 0.0, 1.0);
    const double score = std::clamp(profile_score(profile, an, cn) + 0.2 * g(rng), 1.0, 10.0);
    out.push_back({box.amplitude_lo + an * (box.amplitude_hi - box.amplitude_lo),
                   box.consistency_lo + cn * (box.consistency_hi - box.consistency_lo), score});
  }
  return ExpertDataset(std::move(out));
}

}  // namespace excision
