#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cachelab/rng.hpp"
#include "cachelab/semantic_cache.hpp"
#include "cachelab/serving_node.hpp"
#include "cachelab/time_analyzer.hpp"

namespace cachelab {

inline constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

struct ClusterNode {
  std::size_t left = kNoNode;
  std::size_t right = kNoNode;
  std::size_t parent = kNoNode;
  double weight = 0.0;
  double height = 0.0;                ///< merge distance (0 for leaves)
  std::vector<std::size_t> members;   ///< leaves only, ascending corpus indices
  EmbeddingVector centroid;           ///< leaves only

  bool is_leaf() const { return left == kNoNode; }
};

/// Weighted binary tree over corpus clusters; node weight is subtree cardinality.
class ClusterTree {
 public:
  std::vector<std::string> texts;
  std::vector<std::string> labels;  ///< optional category per text
  std::vector<ClusterNode> nodes;
  std::size_t root = kNoNode;

  const EmbeddingVector& embedding(std::size_t i) const { return embeddings_[i]; }
  std::vector<std::size_t> leaves() const;
  std::size_t leaf_count(std::size_t node) const { return leaf_count_[node]; }
  /// Leaf members ordered by descending cosine to the leaf centroid.
  const std::vector<std::size_t>& members_by_centroid(std::size_t leaf) const {
    return ranked_[leaf];
  }
  /// Nearest other corpus word by embedding, or the word itself if none.
  std::string_view vocabulary_neighbour(std::string_view word) const;
  std::string label_of(std::size_t member) const {
    return member < labels.size() ? labels[member] : std::string();
  }

  /// Recomputes embeddings, rankings and the word-neighbour table from texts and nodes.
  void finalize();

 private:
  std::vector<EmbeddingVector> embeddings_;
  std::vector<std::size_t> leaf_count_;
  std::vector<std::vector<std::size_t>> ranked_;
  std::vector<std::string> vocab_;
  std::vector<std::size_t> neighbour_;
};

/// Average-linkage agglomerative clustering on cosine distance, cut at
/// `target_leaves` clusters. Throws CorpusTooSmall when the corpus has fewer texts.
ClusterTree build_cluster_tree(std::span<const std::string> corpus, std::size_t target_leaves,
                               std::span<const std::string> labels = {});

std::string tree_to_json(const ClusterTree& tree);
ClusterTree tree_from_json(std::string_view text);

enum class DescentMode { sample, greedy };

struct SearchParams {
  double w_rep = 1.0;
  double w_hist = 0.5;
  double w_clu = 0.5;
  double diversity_threshold = 0.9;
  double explore_p = 0.2;
  double novelty_u = 1.0;
  DescentMode descent = DescentMode::sample;
  std::size_t candidates_per_leaf = 8;

  void validate() const;
};

struct Attempt {
  std::string text;
  EmbeddingVector embedding;
  std::size_t leaf = kNoNode;
  std::optional<std::size_t> member;  ///< corpus index when the query is a verbatim member
  std::size_t source_member = 0;      ///< member the query was built from
  bool hit = false;
};

struct Query {
  std::string text;
  EmbeddingVector embedding;
  std::size_t leaf = kNoNode;
  std::optional<std::size_t> member;
  std::size_t source_member = 0;
};

class SearchState {
 public:
  explicit SearchState(const ClusterTree& tree, SearchParams params = {});

  SearchParams params;
  std::vector<Attempt> attempts;      ///< append-only
  std::vector<std::size_t> visits;    ///< per tree node, subtree totals
  bool hit = false;

 private:
  friend Query next_query(const ClusterTree&, SearchState&, Rng&);
  friend void record_result(SearchState&, const Query&, bool);

  const ClusterTree* tree_;
  std::unordered_set<std::size_t> tried_members_;
  std::unordered_set<std::string> tried_texts_;
  // Running max cosine of each corpus text against attempts [0, seen).
  std::vector<double> max_cos_;
  std::vector<std::size_t> max_cos_seen_;
  std::vector<bool> exhausted_;  // per node
};

/// Throws Exhausted when no candidate anywhere passes the diversity gate,
/// DomainError once the state has a hit.
Query next_query(const ClusterTree& tree, SearchState& state, Rng& rng);
void record_result(SearchState& state, const Query& query, bool hit);

struct SemanticAttackOptions {
  UserId user = "attacker";
  VirtualDuration think_time = std::chrono::milliseconds(10);
  std::size_t max_rate_limited_streak = 3;
};

struct SemanticAttackReport {
  bool claimed_hit = false;
  std::size_t probes_used = 0;
  std::string category;  ///< label of the member behind the hit query
  std::string hit_query;
  bool exhausted = false;
  std::optional<RequestOutcome> hit_outcome;  ///< for scoring by the harness
};

SemanticAttackReport run_attack(ServingNode& node, const ClusterTree& tree,
                                std::size_t budget_probes, const SemanticClassifier& classifier,
                                Rng& rng, const SearchParams& params = {},
                                const SemanticAttackOptions& options = {});

}  // namespace cachelab
