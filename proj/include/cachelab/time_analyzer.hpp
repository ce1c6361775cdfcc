#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cachelab/rng.hpp"
#include "cachelab/serving_node.hpp"

namespace cachelab {

/// One observed request: n prompt tokens, k hit blocks, measured TTFT.
struct TimingSample {
  std::size_t n = 0;
  std::size_t k_blocks = 0;
  double ttft = 0.0;

  bool operator==(const TimingSample&) const = default;
};

struct LevelStats {
  std::size_t k_blocks = 0;
  std::size_t count = 0;
  double median = 0.0;
  double mad = 0.0;

  bool operator==(const LevelStats&) const = default;
};

struct TimingProfile {
  std::size_t n = 0;
  std::size_t block_size = 16;
  std::vector<TimingSample> samples;

  std::size_t max_blocks() const { return n / block_size; }
  /// Per-level summaries in ascending k order.
  std::vector<LevelStats> levels() const;
  std::vector<double> ttfts_at(std::size_t k_blocks) const;
};

enum class PredictorKind { curve_bayes, nearest_level, boosted_stumps };
std::string_view predictor_kind_name(PredictorKind k);
PredictorKind parse_predictor_kind(std::string_view s);
inline constexpr PredictorKind kAllPredictorKinds[] = {
    PredictorKind::curve_bayes, PredictorKind::nearest_level, PredictorKind::boosted_stumps};

struct WeightedCandidate {
  std::size_t k_blocks = 0;
  double weight = 0.0;
};

/// Weights sum to 1, sorted by descending weight.
using WeightedCandidates = std::vector<WeightedCandidate>;

struct Stump {
  double threshold = 0.0;
  double left = 0.0;   ///< added when ttft <= threshold
  double right = 0.0;  ///< added when ttft > threshold

  bool operator==(const Stump&) const = default;
};

struct HitPredictor {
  PredictorKind kind = PredictorKind::curve_bayes;
  std::size_t n = 0;
  std::size_t block_size = 16;
  /// Fitted curve t(k) = a*(n - k*block_size)*n + b.
  double a = 0.0;
  double b = 0.0;
  /// Likelihood scale for every k in [0, max_blocks].
  std::vector<double> level_scale;
  std::vector<LevelStats> levels;
  /// boosted_stumps only: residual model on top of the curve inversion.
  std::vector<Stump> stumps;
  double residual_scale = 0.0;
  /// Posterior mass on k >= field end needed to call a field hit.
  double field_threshold = 0.5;

  std::size_t max_blocks() const { return n / block_size; }
  double curve(double k_blocks) const;
  /// Continuous k whose curve value is ttft (unclamped).
  double invert(double ttft) const;
};

/// Drops points farther than 3.5 scaled MADs from the median, repeating until
/// stable, but never more than 30% of the input (the nearest points are kept).
std::vector<double> filter_outliers(std::span<const double> samples);

HitPredictor fit(const TimingProfile& profile, PredictorKind kind);

/// Posterior over hit blocks; `prior`, when non-empty, has one weight per k.
WeightedCandidates predict_block_hits(const HitPredictor& predictor, double ttft, std::size_t n,
                                      std::span<const double> prior = {});

double hit_mass_at_least(const WeightedCandidates& c, std::size_t k_blocks);

bool predict_field_hit(const HitPredictor& predictor, double ttft, std::size_t field_start_block,
                       std::size_t field_end_block);

/// Calibration sweep: k in {0, step, 2*step, ..., K} with step = max(1, round(K/10)).
std::vector<std::size_t> calibration_levels(std::size_t max_blocks);

struct CalibrationOptions {
  UserId user = "calibrator";
  VirtualDuration think_time = std::chrono::milliseconds(10);
};

/// Measures TTFT at engineered hit levels. Each family inserts a fresh random
/// prompt and then probes prompts sharing exactly k leading blocks with it.
TimingProfile calibrate(ServingNode& node, std::size_t n, std::size_t reps_per_k,
                        std::size_t query_budget, Rng& rng, const CalibrationOptions& options = {});

/// Fresh labeled samples, one engineered family per entry of `k_blocks`.
std::vector<TimingSample> labeled_samples(ServingNode& node, std::size_t n,
                                          std::span<const std::size_t> k_blocks, Rng& rng,
                                          const CalibrationOptions& options = {});

struct AnalyzerAccuracy {
  double block = 0.0;
  double field = 0.0;
};

/// Block accuracy over k uniform on [0, K]; field accuracy over draws that pick
/// one of four evaluation fields and set k to its end (hit) or one block short.
AnalyzerAccuracy evaluate_analyzer(ServingNode& node, const HitPredictor& predictor,
                                   std::size_t draws, Rng& rng,
                                   const CalibrationOptions& options = {});

/// Field ends used by evaluate_analyzer: round(K*(j+1)/5) for j = 0..3.
std::vector<std::size_t> evaluation_field_ends(std::size_t max_blocks);

struct SemanticClassifier {
  double threshold = 0.0;
  bool is_hit(double ttft) const { return ttft < threshold; }
};

/// Threshold halfway between the filtered hit maximum and miss minimum.
SemanticClassifier fit_semantic_classifier(std::span<const double> hit_profile,
                                           std::span<const double> miss_profile);
bool classify_semantic_hit(std::span<const double> hit_profile,
                           std::span<const double> miss_profile, double ttft);

struct SemanticProfiles {
  std::vector<double> hit;
  std::vector<double> miss;
};

/// Per repetition: a unique random query (a miss) followed by the same query (a hit).
SemanticProfiles calibrate_semantic(ServingNode& node, std::size_t reps, Rng& rng,
                                    const CalibrationOptions& options = {});

/// Random lowercase words, for queries nothing in a corpus resembles.
std::string random_query_text(Rng& rng, std::size_t words = 12);

std::string profile_to_json(const TimingProfile& p);
TimingProfile profile_from_json(std::string_view text);
std::string predictor_to_json(const HitPredictor& p);
HitPredictor predictor_from_json(std::string_view text);

}  // namespace cachelab
