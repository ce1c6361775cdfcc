#include "cachelab/time_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <json.hpp>

namespace cachelab {

using nlohmann::json;

namespace {

constexpr double kMadScale = 1.4826;
constexpr double kOutlierCut = 3.5;
constexpr double kMaxRemovedFraction = 0.3;
constexpr double kScaleFloor = 1e-9;
constexpr double kNegligibleWeight = 1e-12;
constexpr int kStumpRounds = 50;
constexpr double kStumpRate = 0.3;

double median_of(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + m);
  return 0.5 * (lo + hi);
}

double mad_of(const std::vector<double>& v, double med) {
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  return median_of(std::move(dev));
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> filtered_or_raw(const std::vector<double>& v) {
  return v.size() >= 3 ? filter_outliers(v) : v;
}

// Normalizes log-weights into sorted candidates, dropping negligible mass.
WeightedCandidates normalize(const std::vector<double>& logw) {
  double best = -std::numeric_limits<double>::infinity();
  for (double l : logw) best = std::max(best, l);
  std::vector<double> w(logw.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logw.size(); ++k) {
    w[k] = std::isfinite(best) ? std::exp(logw[k] - best) : 1.0;
    total += w[k];
  }
  WeightedCandidates out;
  double kept = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double p = w[k] / total;
    if (p >= kNegligibleWeight) {
      out.push_back({k, p});
      kept += p;
    }
  }
  for (auto& c : out) c.weight /= kept;
  std::stable_sort(out.begin(), out.end(),
                   [](const WeightedCandidate& x, const WeightedCandidate& y) { return x.weight > y.weight; });
  return out;
}

std::vector<Stump> boost_stumps(std::vector<std::pair<double, double>> pts) {
  // pts: (ttft, residual), refit in place.
  std::sort(pts.begin(), pts.end());
  const std::size_t m = pts.size();
  std::vector<Stump> stumps;
  for (int round = 0; round < kStumpRounds; ++round) {
    double total = 0.0;
    for (const auto& p : pts) total += p.second;
    double best_gain = 0.0, left_sum_best = 0.0;
    std::size_t best_split = 0;
    double left = 0.0;
    const double base = total * total / static_cast<double>(m);
    for (std::size_t i = 1; i < m; ++i) {
      left += pts[i - 1].second;
      if (pts[i].first == pts[i - 1].first) continue;
      const double nl = static_cast<double>(i), nr = static_cast<double>(m - i);
      const double right = total - left;
      const double gain = left * left / nl + right * right / nr - base;
      if (gain > best_gain) {
        best_gain = gain;
        best_split = i;
        left_sum_best = left;
      }
    }
    if (best_split == 0 || best_gain < 1e-18) break;
    const double nl = static_cast<double>(best_split), nr = static_cast<double>(m - best_split);
    Stump s;
    s.threshold = 0.5 * (pts[best_split - 1].first + pts[best_split].first);
    s.left = kStumpRate * left_sum_best / nl;
    s.right = kStumpRate * (total - left_sum_best) / nr;
    for (std::size_t i = 0; i < m; ++i) pts[i].second -= i < best_split ? s.left : s.right;
    stumps.push_back(s);
  }
  return stumps;
}

double boosted_estimate(const HitPredictor& p, double ttft) {
  const double K = static_cast<double>(p.max_blocks());
  // A flat curve carries no information; start from the middle level.
  double k = p.a > 0.0 ? std::clamp(p.invert(ttft), 0.0, K) : 0.5 * K;
  for (const Stump& s : p.stumps) k += ttft <= s.threshold ? s.left : s.right;
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<LevelStats> TimingProfile::levels() const {
  std::map<std::size_t, std::vector<double>> by_k;
  for (const auto& s : samples) by_k[s.k_blocks].push_back(s.ttft);
  std::vector<LevelStats> out;
  for (auto& [k, v] : by_k) {
    const double med = median_of(v);
    out.push_back({k, v.size(), med, mad_of(v, med)});
  }
  return out;
}

std::vector<double> TimingProfile::ttfts_at(std::size_t k_blocks) const {
  std::vector<double> out;
  for (const auto& s : samples)
    if (s.k_blocks == k_blocks) out.push_back(s.ttft);
  return out;
}

std::string_view predictor_kind_name(PredictorKind k) {
  switch (k) {
    case PredictorKind::curve_bayes: return "curve_bayes";
    case PredictorKind::nearest_level: return "nearest_level";
    case PredictorKind::boosted_stumps: return "boosted_stumps";
  }
  return "?";
}

PredictorKind parse_predictor_kind(std::string_view s) {
  for (PredictorKind k : kAllPredictorKinds)
    if (predictor_kind_name(k) == s) return k;
  throw ConfigInvalid("unknown predictor kind '" + std::string(s) + "'");
}

double HitPredictor::curve(double k_blocks) const {
  const double nd = static_cast<double>(n);
  return a * (nd - k_blocks * static_cast<double>(block_size)) * nd + b;
}

double HitPredictor::invert(double ttft) const {
  const double nd = static_cast<double>(n);
  return (nd - (ttft - b) / (a * nd)) / static_cast<double>(block_size);
}

std::vector<double> filter_outliers(std::span<const double> samples) {
  if (samples.size() < 3) throw TooFewSamples("filter_outliers needs at least 3 samples");
  const std::size_t max_removed =
      static_cast<std::size_t>(std::floor(kMaxRemovedFraction * static_cast<double>(samples.size())));
  std::vector<std::size_t> keep(samples.size());
  std::iota(keep.begin(), keep.end(), 0);

  for (;;) {
    std::vector<double> cur;
    cur.reserve(keep.size());
    for (std::size_t i : keep) cur.push_back(samples[i]);
    const double med = median_of(cur);
    const double cut = kOutlierCut * mad_of(cur, med) * kMadScale;
    std::vector<std::size_t> next;
    for (std::size_t i : keep)
      if (std::abs(samples[i] - med) <= cut) next.push_back(i);
    if (next.size() == keep.size()) break;
    if (samples.size() - next.size() > max_removed) {
      // Keep the points nearest the current median up to the removal cap.
      std::vector<std::size_t> order = keep;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return std::abs(samples[x] - med) < std::abs(samples[y] - med);
      });
      order.resize(samples.size() - max_removed);
      std::sort(order.begin(), order.end());
      keep = std::move(order);
      break;
    }
    keep = std::move(next);
  }
  std::vector<double> out;
  out.reserve(keep.size());
  for (std::size_t i : keep) out.push_back(samples[i]);
  return out;
}

HitPredictor fit(const TimingProfile& profile, PredictorKind kind) {
  if (profile.block_size == 0 || profile.n < profile.block_size)
    throw DegenerateProfile("profile needs n >= block_size");
  const std::size_t K = profile.max_blocks();
  std::map<std::size_t, std::vector<double>> by_k;
  for (const auto& s : profile.samples) {
    if (s.k_blocks > K) throw DomainError("sample k exceeds n / block_size");
    by_k[s.k_blocks].push_back(s.ttft);
  }
  if (by_k.size() < 2) throw DegenerateProfile("profile needs at least 2 distinct hit levels");

  HitPredictor p;
  p.kind = kind;
  p.n = profile.n;
  p.block_size = profile.block_size;
  p.levels = profile.levels();

  const double nd = static_cast<double>(profile.n);
  const double B = static_cast<double>(profile.block_size);
  std::map<std::size_t, std::vector<double>> clean;
  double sx = 0, sy = 0, cnt = 0;
  for (auto& [k, v] : by_k) {
    clean[k] = filtered_or_raw(v);
    const double x = (nd - static_cast<double>(k) * B) * nd;
    for (double y : clean[k]) {
      sx += x;
      sy += y;
      cnt += 1;
    }
  }
  const double mx = sx / cnt, my = sy / cnt;
  double sxy = 0, sxx = 0;
  for (auto& [k, v] : clean) {
    const double dx = (nd - static_cast<double>(k) * B) * nd - mx;
    for (double y : v) {
      sxy += dx * (y - my);
      sxx += dx * dx;
    }
  }
  p.a = sxy / sxx;
  p.b = my - p.a * mx;

  // Per-level scale, linearly interpolated between measured levels.
  std::vector<std::pair<std::size_t, double>> measured;
  for (auto& [k, v] : clean) measured.emplace_back(k, stddev_of(v));
  p.level_scale.assign(K + 1, 0.0);
  for (std::size_t k = 0; k <= K; ++k) {
    double s;
    if (k <= measured.front().first) {
      s = measured.front().second;
    } else if (k >= measured.back().first) {
      s = measured.back().second;
    } else {
      auto hi = std::lower_bound(measured.begin(), measured.end(), k,
                                 [](const auto& m, std::size_t key) { return m.first < key; });
      auto lo = std::prev(hi);
      const double f = static_cast<double>(k - lo->first) / static_cast<double>(hi->first - lo->first);
      s = lo->second + f * (hi->second - lo->second);
    }
    p.level_scale[k] = std::max(s, kScaleFloor);
  }

  if (kind == PredictorKind::boosted_stumps) {
    std::vector<std::pair<double, double>> pts;
    for (auto& [k, v] : clean)
      for (double t : v) pts.emplace_back(t, static_cast<double>(k) - boosted_estimate(p, t));
    p.stumps = boost_stumps(pts);
    double ss = 0.0;
    for (auto& [k, v] : clean)
      for (double t : v) {
        const double r = static_cast<double>(k) - boosted_estimate(p, t);
        ss += r * r;
      }
    p.residual_scale = std::sqrt(ss / cnt);
  }
  return p;
}

WeightedCandidates predict_block_hits(const HitPredictor& p, double ttft, std::size_t n,
                                      std::span<const double> prior) {
  if (n != p.n) throw DomainError("predictor was fitted for a different prompt length");
  const std::size_t K = p.max_blocks();
  if (!prior.empty() && prior.size() != K + 1) throw DomainError("prior needs one weight per level");
  auto log_prior = [&](std::size_t k) {
    return prior.empty() ? 0.0 : (prior[k] > 0.0 ? std::log(prior[k]) : -std::numeric_limits<double>::infinity());
  };

  switch (p.kind) {
    case PredictorKind::curve_bayes: {
      if (p.a > 0.0 && prior.empty()) {
        if (ttft >= p.curve(0.0)) return {{0, 1.0}};
        if (ttft <= p.curve(static_cast<double>(K))) return {{K, 1.0}};
      }
      std::vector<double> logw(K + 1);
      for (std::size_t k = 0; k <= K; ++k) {
        const double s = p.level_scale[k];
        const double z = (ttft - p.curve(static_cast<double>(k))) / s;
        logw[k] = -0.5 * z * z - std::log(s) + log_prior(k);
      }
      return normalize(logw);
    }
    case PredictorKind::nearest_level: {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k <= K; ++k) {
        if (!prior.empty() && !(prior[k] > 0.0)) continue;
        const double d = std::abs(ttft - p.curve(static_cast<double>(k)));
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      return {{best, 1.0}};
    }
    case PredictorKind::boosted_stumps: {
      const double center = boosted_estimate(p, ttft);
      const double s = std::max(p.residual_scale, 1e-6);
      std::vector<double> logw(K + 1);
      for (std::size_t k = 0; k <= K; ++k) {
        const double z = (static_cast<double>(k) - center) / s;
        logw[k] = -0.5 * z * z + log_prior(k);
      }
      return normalize(logw);
    }
  }
  return {};
}

double hit_mass_at_least(const WeightedCandidates& c, std::size_t k_blocks) {
  double m = 0.0;
  for (const auto& w : c)
    if (w.k_blocks >= k_blocks) m += w.weight;
  return m;
}

bool predict_field_hit(const HitPredictor& p, double ttft, std::size_t field_start_block,
                       std::size_t field_end_block) {
  if (field_end_block <= field_start_block || field_end_block > p.max_blocks())
    throw DomainError("field block range outside the prompt");
  return hit_mass_at_least(predict_block_hits(p, ttft, p.n), field_end_block) > p.field_threshold;
}

// ---------------------------------------------------------------------------
// Calibration

std::vector<std::size_t> calibration_levels(std::size_t max_blocks) {
  const std::size_t step =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(max_blocks) / 10.0)));
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k <= max_blocks; k += step) out.push_back(k);
  if (out.back() != max_blocks) out.push_back(max_blocks);
  return out;
}

namespace {

std::vector<TokenId> random_tokens(Rng& rng, std::size_t count) {
  std::vector<TokenId> t(count);
  for (auto& id : t) id = rng() | (TokenId{1} << 63);
  return t;
}

TokenSeq probe_seq(const std::vector<TokenId>& base, std::size_t shared_tokens, Rng& rng) {
  TokenSeq s;
  s.tokens.assign(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(shared_tokens));
  const auto fresh = random_tokens(rng, base.size() - shared_tokens);
  s.tokens.insert(s.tokens.end(), fresh.begin(), fresh.end());
  s.source_text = random_query_text(rng);
  return s;
}

// Submits until accepted, waiting out rate limits on the virtual clock.
RequestOutcome submit_accepted(ServingNode& node, const Request& req, Rng& rng,
                               const CalibrationOptions& o) {
  for (;;) {
    SubmitResult r = timed_submit(node, req, rng, o.think_time);
    if (auto* out = std::get_if<RequestOutcome>(&r)) return std::move(*out);
    const auto& rl = std::get<RateLimited>(r);
    const auto wait = rl.retry_after - node.now();
    node.advance_clock(std::max(wait, VirtualDuration(1)));
  }
}

double measure(ServingNode& node, TokenSeq seq, Rng& rng, const CalibrationOptions& o) {
  Request req{o.user, std::move(seq), 1};
  return submit_accepted(node, req, rng, o).ttft;
}

}  // namespace

TimingProfile calibrate(ServingNode& node, std::size_t n, std::size_t reps_per_k,
                        std::size_t query_budget, Rng& rng, const CalibrationOptions& options) {
  const std::size_t B = node.config().prefix.block_size;
  if (n < B) throw DomainError("calibration needs n >= block_size");
  if (reps_per_k == 0) throw DomainError("reps_per_k must be >= 1");
  const std::size_t K = n / B;
  const auto levels = calibration_levels(K);
  const std::size_t families = query_budget / levels.size();
  if (families < reps_per_k)
    throw BudgetExceeded("budget " + std::to_string(query_budget) + " cannot cover " +
                         std::to_string(levels.size()) + " levels x " + std::to_string(reps_per_k) +
                         " reps");

  TimingProfile profile;
  profile.n = n;
  profile.block_size = B;
  for (std::size_t f = 0; f < families; ++f) {
    TokenSeq base;
    base.tokens = random_tokens(rng, n);
    base.source_text = random_query_text(rng);
    const auto base_tokens = base.tokens;
    profile.samples.push_back({n, 0, measure(node, std::move(base), rng, options)});
    for (std::size_t k : levels) {
      if (k == 0) continue;
      profile.samples.push_back({n, k, measure(node, probe_seq(base_tokens, k * B, rng), rng, options)});
    }
  }
  return profile;
}

std::vector<TimingSample> labeled_samples(ServingNode& node, std::size_t n,
                                          std::span<const std::size_t> k_blocks, Rng& rng,
                                          const CalibrationOptions& options) {
  const std::size_t B = node.config().prefix.block_size;
  std::vector<TimingSample> out;
  out.reserve(k_blocks.size());
  for (std::size_t k : k_blocks) {
    if (k * B > n) throw DomainError("label exceeds prompt length");
    TokenSeq base;
    base.tokens = random_tokens(rng, n);
    base.source_text = random_query_text(rng);
    if (k == 0) {
      out.push_back({n, 0, measure(node, std::move(base), rng, options)});
      continue;
    }
    const auto base_tokens = base.tokens;
    measure(node, std::move(base), rng, options);
    out.push_back({n, k, measure(node, probe_seq(base_tokens, k * B, rng), rng, options)});
  }
  return out;
}

std::vector<std::size_t> evaluation_field_ends(std::size_t max_blocks) {
  std::vector<std::size_t> ends;
  for (std::size_t j = 0; j < 4; ++j)
    ends.push_back(static_cast<std::size_t>(
        std::lround(static_cast<double>(max_blocks) * static_cast<double>(j + 1) / 5.0)));
  return ends;
}

AnalyzerAccuracy evaluate_analyzer(ServingNode& node, const HitPredictor& predictor,
                                   std::size_t draws, Rng& rng, const CalibrationOptions& options) {
  AnalyzerAccuracy acc;
  if (draws == 0) return acc;
  const std::size_t K = predictor.max_blocks();

  std::vector<std::size_t> ks(draws);
  for (auto& k : ks) k = uniform_index(rng, K + 1);
  std::size_t block_ok = 0;
  for (const auto& s : labeled_samples(node, predictor.n, ks, rng, options)) {
    const auto c = predict_block_hits(predictor, s.ttft, predictor.n);
    if (!c.empty() && c.front().k_blocks == s.k_blocks) ++block_ok;
  }

  const auto ends = evaluation_field_ends(K);
  std::vector<std::size_t> field_end(draws), labels(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    field_end[i] = ends[uniform_index(rng, ends.size())];
    const bool hit = uniform01(rng) < 0.5;
    labels[i] = hit ? field_end[i] : field_end[i] - 1;
  }
  const auto samples = labeled_samples(node, predictor.n, labels, rng, options);
  std::size_t field_ok = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    const bool truth = labels[i] >= field_end[i];
    const bool said = predict_field_hit(predictor, samples[i].ttft, field_end[i] - 1, field_end[i]);
    if (said == truth) ++field_ok;
  }
  acc.block = static_cast<double>(block_ok) / static_cast<double>(draws);
  acc.field = static_cast<double>(field_ok) / static_cast<double>(draws);
  return acc;
}

// ---------------------------------------------------------------------------
// Semantic hits

SemanticClassifier fit_semantic_classifier(std::span<const double> hit_profile,
                                           std::span<const double> miss_profile) {
  if (hit_profile.size() < 10 || miss_profile.size() < 10)
    throw TooFewSamples("semantic classifier needs at least 10 hit and 10 miss samples");
  const auto hit = filter_outliers(hit_profile);
  const auto miss = filter_outliers(miss_profile);
  const double hmax = *std::max_element(hit.begin(), hit.end());
  const double mmin = *std::min_element(miss.begin(), miss.end());
  if (hmax >= mmin) throw OverlappingProfiles("hit and miss timing supports overlap");
  return SemanticClassifier{0.5 * (hmax + mmin)};
}

bool classify_semantic_hit(std::span<const double> hit_profile,
                           std::span<const double> miss_profile, double ttft) {
  return fit_semantic_classifier(hit_profile, miss_profile).is_hit(ttft);
}

std::string random_query_text(Rng& rng, std::size_t words) {
  std::string s;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) s += ' ';
    const std::size_t len = 5 + uniform_index(rng, 4);
    for (std::size_t i = 0; i < len; ++i) s += static_cast<char>('a' + uniform_index(rng, 26));
  }
  return s;
}

SemanticProfiles calibrate_semantic(ServingNode& node, std::size_t reps, Rng& rng,
                                    const CalibrationOptions& options) {
  SemanticProfiles out;
  for (std::size_t i = 0; i < reps; ++i) {
    const std::string text = random_query_text(rng);
    const Request req = Request::text(options.user, text, 1);
    out.miss.push_back(submit_accepted(node, req, rng, options).ttft);
    out.hit.push_back(submit_accepted(node, req, rng, options).ttft);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr int kDocVersion = 1;

json levels_json(const std::vector<LevelStats>& levels) {
  json a = json::array();
  for (const auto& l : levels)
    a.push_back({{"k_blocks", l.k_blocks}, {"count", l.count}, {"median", l.median}, {"mad", l.mad}});
  return a;
}

std::vector<LevelStats> levels_from(const json& a) {
  std::vector<LevelStats> out;
  for (const auto& l : a)
    out.push_back({l.at("k_blocks").get<std::size_t>(), l.at("count").get<std::size_t>(),
                   l.at("median").get<double>(), l.at("mad").get<double>()});
  return out;
}

json parse_doc(std::string_view text, std::string_view format) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed JSON: ") + e.what());
  }
  if (j.value("format", "") != format) throw ProtocolError("expected a " + std::string(format) + " document");
  if (j.value("version", 0) != kDocVersion)
    throw ProtocolError("unsupported " + std::string(format) + " version");
  return j;
}

}  // namespace

std::string profile_to_json(const TimingProfile& p) {
  json samples = json::array();
  for (const auto& s : p.samples) samples.push_back({s.k_blocks, s.ttft});
  json j = {{"format", "timing_profile"}, {"version", kDocVersion}, {"n", p.n},
            {"block_size", p.block_size}, {"levels", levels_json(p.levels())}, {"samples", samples}};
  return j.dump(2);
}

TimingProfile profile_from_json(std::string_view text) {
  const json j = parse_doc(text, "timing_profile");
  try {
    TimingProfile p;
    p.n = j.at("n").get<std::size_t>();
    p.block_size = j.at("block_size").get<std::size_t>();
    for (const auto& s : j.at("samples"))
      p.samples.push_back({p.n, s.at(0).get<std::size_t>(), s.at(1).get<double>()});
    return p;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad timing_profile: ") + e.what());
  }
}

std::string predictor_to_json(const HitPredictor& p) {
  json stumps = json::array();
  for (const auto& s : p.stumps) stumps.push_back({s.threshold, s.left, s.right});
  json j = {{"format", "hit_predictor"},
            {"version", kDocVersion},
            {"kind", predictor_kind_name(p.kind)},
            {"n", p.n},
            {"block_size", p.block_size},
            {"a", p.a},
            {"b", p.b},
            {"field_threshold", p.field_threshold},
            {"level_scale", p.level_scale},
            {"levels", levels_json(p.levels)},
            {"stumps", stumps},
            {"residual_scale", p.residual_scale}};
  return j.dump(2);
}

HitPredictor predictor_from_json(std::string_view text) {
  const json j = parse_doc(text, "hit_predictor");
  try {
    HitPredictor p;
    p.kind = parse_predictor_kind(j.at("kind").get<std::string>());
    p.n = j.at("n").get<std::size_t>();
    p.block_size = j.at("block_size").get<std::size_t>();
    p.a = j.at("a").get<double>();
    p.b = j.at("b").get<double>();
    p.field_threshold = j.at("field_threshold").get<double>();
    p.level_scale = j.at("level_scale").get<std::vector<double>>();
    p.levels = levels_from(j.at("levels"));
    for (const auto& s : j.at("stumps"))
      p.stumps.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
    p.residual_scale = j.at("residual_scale").get<double>();
    if (p.level_scale.size() != p.max_blocks() + 1) throw ProtocolError("level_scale size mismatch");
    return p;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad hit_predictor: ") + e.what());
  } catch (const ConfigInvalid& e) {
    throw ProtocolError(e.what());
  }
}

}  // namespace cachelab
