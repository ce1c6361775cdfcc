#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cachelab/core.hpp"
#include "cachelab/rng.hpp"

namespace cachelab {

/// Synthetic six-field records with tunable inter-field correlation.
///
/// A fixed "world" derived from `seed` assigns every (age band, gender) cell a
/// primary disease, and every disease a canonical symptom set, a typical
/// duration and a typical chief complaint. Each correlated field takes its
/// world value with probability rho and an independent uniform draw otherwise.
struct PrefixCorpusSpec {
  std::uint64_t seed = 1;
  std::size_t n_records = 5000;
  std::size_t n_diseases = 40;
  std::size_t symptoms_per_disease = 6;
  double rho = 0.8;
  std::size_t n_durations = 12;
  int min_age = 18;
  int max_age = 90;

  void validate() const;
};

const std::vector<std::string>& disease_vocabulary();
const std::vector<std::string>& symptom_vocabulary();
const std::vector<std::string>& duration_vocabulary();

/// Records drawn from the configured world; `rng` only drives the per-record draws.
std::vector<FieldRecord> generate_prefix_corpus(const PrefixCorpusSpec& spec, Rng& rng);
std::vector<FieldRecord> generate_prefix_records(const PrefixCorpusSpec& spec, std::size_t count,
                                                 Rng& rng);

struct LabeledText {
  std::string text;
  std::string category;

  bool operator==(const LabeledText&) const = default;
};

/// Legal-consultation style questions. Each category owns a subject and a
/// detail vocabulary; canonical questions join one of each through a shared
/// frame, and records pick canonical questions with Zipf popularity.
struct SemanticCorpusSpec {
  std::uint64_t seed = 1;
  std::size_t n_categories = 13;
  /// Records per category; empty means the built-in counts.
  std::vector<std::size_t> records_per_category;
  /// Probability a query gains a one-word prefix or suffix.
  double style_jitter = 0.3;
  std::size_t canonical_min = 6;
  std::size_t canonical_max = 24;
  std::size_t canonical_divisor = 10;
  double zipf_s = 1.0;

  void validate() const;
  std::size_t category_records(std::size_t c) const;
};

const std::vector<std::string>& legal_category_names();
const std::vector<std::size_t>& legal_category_counts();

std::vector<LabeledText> generate_semantic_corpus(const SemanticCorpusSpec& spec, Rng& rng);
/// `count` fresh queries of one category from the same distribution.
std::vector<LabeledText> generate_semantic_queries(const SemanticCorpusSpec& spec,
                                                   std::size_t category, std::size_t count,
                                                   Rng& rng);
/// The canonical questions of a category, most popular first.
std::vector<std::string> canonical_questions(const SemanticCorpusSpec& spec, std::size_t category);

}  // namespace cachelab
