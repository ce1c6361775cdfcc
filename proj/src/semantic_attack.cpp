#include "cachelab/semantic_attack.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace cachelab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Tree

std::vector<std::size_t> ClusterTree::leaves() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].is_leaf()) out.push_back(i);
  return out;
}

std::string_view ClusterTree::vocabulary_neighbour(std::string_view word) const {
  const auto it = std::lower_bound(vocab_.begin(), vocab_.end(), word);
  if (it == vocab_.end() || *it != word) return word;
  return vocab_[neighbour_[static_cast<std::size_t>(it - vocab_.begin())]];
}

namespace {

bool is_vocab_word(std::string_view u) {
  return u.size() >= 3 && std::all_of(u.begin(), u.end(), [](char c) {
           return std::islower(static_cast<unsigned char>(c)) != 0;
         });
}

EmbeddingVector centroid_of(const std::vector<std::size_t>& members,
                            const std::vector<EmbeddingVector>& emb) {
  EmbeddingVector c;
  if (emb.empty()) return c;
  c.values.assign(emb.front().values.size(), 0.0);
  for (std::size_t m : members)
    for (std::size_t d = 0; d < c.values.size(); ++d) c.values[d] += emb[m].values[d];
  double norm = 0.0;
  for (double v : c.values) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& v : c.values) v /= norm;
  return c;
}

}  // namespace

void ClusterTree::finalize() {
  embeddings_.clear();
  embeddings_.reserve(texts.size());
  for (const auto& t : texts) embeddings_.push_back(embed(t));

  leaf_count_.assign(nodes.size(), 0);
  ranked_.assign(nodes.size(), {});
  // Parents are visited before children, so the reversed order is bottom-up.
  std::vector<std::size_t> order;
  if (root != kNoNode) {
    std::vector<std::size_t> stack = {root};
    while (!stack.empty()) {
      const std::size_t n = stack.back();
      stack.pop_back();
      order.push_back(n);
      if (!nodes[n].is_leaf()) {
        nodes[nodes[n].left].parent = n;
        nodes[nodes[n].right].parent = n;
        stack.push_back(nodes[n].left);
        stack.push_back(nodes[n].right);
      }
    }
    nodes[root].parent = kNoNode;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    ClusterNode& n = nodes[*it];
    if (n.is_leaf()) {
      leaf_count_[*it] = 1;
      auto& r = ranked_[*it];
      r = n.members;
      std::vector<double> sim(texts.size(), 0.0);
      for (std::size_t m : r) sim[m] = cosine(embeddings_[m], n.centroid);
      std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
    } else {
      leaf_count_[*it] = leaf_count_[n.left] + leaf_count_[n.right];
    }
  }

  std::vector<std::string> words;
  for (const auto& t : texts)
    for (std::string_view u : token_units(t))
      if (is_vocab_word(u)) words.emplace_back(u);
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  vocab_ = std::move(words);
  std::vector<EmbeddingVector> wemb;
  wemb.reserve(vocab_.size());
  for (const auto& w : vocab_) wemb.push_back(embed(w));
  neighbour_.assign(vocab_.size(), 0);
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    std::size_t best = i;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < vocab_.size(); ++j) {
      if (j == i) continue;
      const double s = cosine(wemb[i], wemb[j]);
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    neighbour_[i] = best;
  }
}

ClusterTree build_cluster_tree(std::span<const std::string> corpus, std::size_t target_leaves,
                               std::span<const std::string> labels) {
  if (target_leaves == 0) throw DomainError("target_leaves must be >= 1");
  if (corpus.size() < target_leaves)
    throw CorpusTooSmall("corpus of " + std::to_string(corpus.size()) + " texts cannot form " +
                         std::to_string(target_leaves) + " clusters");
  if (!labels.empty() && labels.size() != corpus.size())
    throw DomainError("labels must match the corpus size");
  const std::size_t N = corpus.size();
  std::vector<EmbeddingVector> emb;
  emb.reserve(N);
  for (const auto& t : corpus) emb.push_back(embed(t));

  std::vector<double> D(N * N, 0.0);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) D[i * N + j] = D[j * N + i] = 1.0 - cosine(emb[i], emb[j]);

  // Dendrogram: nodes 0..N-1 are singletons, merge m creates node N+m.
  struct Merge {
    std::size_t a, b;
    double height;
  };
  std::vector<Merge> merges;
  merges.reserve(N > 0 ? N - 1 : 0);
  std::vector<double> node_height(N, 0.0);
  std::vector<std::size_t> size(N, 1), slot_node(N);
  std::iota(slot_node.begin(), slot_node.end(), 0);
  std::vector<bool> active(N, true);
  std::vector<std::size_t> chain;
  std::size_t remaining = N;
  while (remaining > 1) {
    if (chain.empty()) {
      std::size_t first = 0;
      while (!active[first]) ++first;
      chain.push_back(first);
    }
    const std::size_t a = chain.back();
    const bool has_prev = chain.size() >= 2;
    std::size_t best = has_prev ? chain[chain.size() - 2] : kNoNode;
    double best_d = has_prev ? D[a * N + best] : std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < N; ++c) {
      if (!active[c] || c == a) continue;
      const double d = D[a * N + c];
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (has_prev && best == chain[chain.size() - 2]) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t s = std::min(a, best), o = std::max(a, best);
      const double na = static_cast<double>(size[a]), nb = static_cast<double>(size[best]);
      for (std::size_t c = 0; c < N; ++c) {
        if (!active[c] || c == a || c == best) continue;
        const double d = (na * D[a * N + c] + nb * D[best * N + c]) / (na + nb);
        D[s * N + c] = D[c * N + s] = d;
      }
      const std::size_t na_node = slot_node[a], nb_node = slot_node[best];
      const double h = std::max({best_d, node_height[na_node], node_height[nb_node]});
      merges.push_back({na_node, nb_node, h});
      node_height.push_back(h);
      size[s] += size[o];
      active[o] = false;
      slot_node[s] = N + merges.size() - 1;
      --remaining;
    } else {
      chain.push_back(best);
    }
  }

  // The last target_leaves - 1 merges by (height, discovery order) form the tree.
  std::vector<std::size_t> by_height(merges.size());
  std::iota(by_height.begin(), by_height.end(), 0);
  std::stable_sort(by_height.begin(), by_height.end(),
                   [&](std::size_t x, std::size_t y) { return merges[x].height < merges[y].height; });
  std::vector<bool> top(merges.size(), false);
  for (std::size_t i = merges.size() - (target_leaves - 1); i < merges.size(); ++i) top[by_height[i]] = true;

  auto descendants = [&](std::size_t node) {
    std::vector<std::size_t> out, stack = {node};
    while (!stack.empty()) {
      const std::size_t n = stack.back();
      stack.pop_back();
      if (n < N) {
        out.push_back(n);
      } else {
        stack.push_back(merges[n - N].a);
        stack.push_back(merges[n - N].b);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  std::vector<std::size_t> min_member(N + merges.size());
  for (std::size_t i = 0; i < N; ++i) min_member[i] = i;
  for (std::size_t m = 0; m < merges.size(); ++m)
    min_member[N + m] = std::min(min_member[merges[m].a], min_member[merges[m].b]);

  ClusterTree tree;
  tree.texts.assign(corpus.begin(), corpus.end());
  tree.labels.assign(labels.begin(), labels.end());
  const std::size_t dendro_root = merges.empty() ? 0 : N + merges.size() - 1;

  // Preorder copy of the top part; left child holds the smaller member index.
  auto build = [&](auto&& self, std::size_t dnode) -> std::size_t {
    const std::size_t id = tree.nodes.size();
    tree.nodes.emplace_back();
    if (dnode >= N && top[dnode - N]) {
      std::size_t l = merges[dnode - N].a, r = merges[dnode - N].b;
      if (min_member[r] < min_member[l]) std::swap(l, r);
      tree.nodes[id].height = merges[dnode - N].height;
      const std::size_t li = self(self, l);
      const std::size_t ri = self(self, r);
      tree.nodes[id].left = li;
      tree.nodes[id].right = ri;
      tree.nodes[id].weight = tree.nodes[li].weight + tree.nodes[ri].weight;
    } else {
      auto members = descendants(dnode);
      tree.nodes[id].weight = static_cast<double>(members.size());
      tree.nodes[id].centroid = centroid_of(members, emb);
      tree.nodes[id].members = std::move(members);
    }
    return id;
  };
  tree.root = build(build, dendro_root);
  tree.finalize();
  return tree;
}

std::string tree_to_json(const ClusterTree& tree) {
  json nodes = json::array();
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    json j = {{"id", i}, {"weight", n.weight}, {"height", n.height}};
    if (n.is_leaf()) {
      j["members"] = n.members;
      j["centroid"] = n.centroid.values;
    } else {
      j["left"] = n.left;
      j["right"] = n.right;
    }
    nodes.push_back(std::move(j));
  }
  json doc = {{"format", "cluster_tree"}, {"version", 1},          {"root", tree.root},
              {"texts", tree.texts},      {"labels", tree.labels}, {"nodes", nodes}};
  return doc.dump(2);
}

ClusterTree tree_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "cluster_tree" || j.value("version", 0) != 1)
      throw ProtocolError("not a version 1 cluster_tree document");
    ClusterTree t;
    t.texts = j.at("texts").get<std::vector<std::string>>();
    t.labels = j.at("labels").get<std::vector<std::string>>();
    t.root = j.at("root").get<std::size_t>();
    for (const auto& n : j.at("nodes")) {
      ClusterNode c;
      c.weight = n.at("weight").get<double>();
      c.height = n.at("height").get<double>();
      if (n.contains("members")) {
        c.members = n.at("members").get<std::vector<std::size_t>>();
        c.centroid.values = n.at("centroid").get<std::vector<double>>();
      } else {
        c.left = n.at("left").get<std::size_t>();
        c.right = n.at("right").get<std::size_t>();
      }
      t.nodes.push_back(std::move(c));
    }
    for (const auto& n : t.nodes) {
      if (!n.is_leaf() && (n.left >= t.nodes.size() || n.right >= t.nodes.size()))
        throw ProtocolError("cluster_tree child index out of range");
      for (std::size_t m : n.members)
        if (m >= t.texts.size()) throw ProtocolError("cluster_tree member index out of range");
    }
    if (t.root >= t.nodes.size()) throw ProtocolError("cluster_tree root out of range");
    t.finalize();
    return t;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("bad cluster_tree: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Search

void SearchParams::validate() const {
  if (!(diversity_threshold > 0.0 && diversity_threshold <= 1.0))
    throw ConfigInvalid("diversity_threshold must lie in (0, 1]");
  if (!(explore_p >= 0.0 && explore_p <= 1.0)) throw ConfigInvalid("explore_p must lie in [0, 1]");
  if (novelty_u < 0.0) throw ConfigInvalid("novelty_u must be >= 0");
  if (candidates_per_leaf == 0) throw ConfigInvalid("candidates_per_leaf must be >= 1");
}

SearchState::SearchState(const ClusterTree& tree, SearchParams p)
    : params(p),
      visits(tree.nodes.size(), 0),
      tree_(&tree),
      max_cos_(tree.texts.size(), -std::numeric_limits<double>::infinity()),
      max_cos_seen_(tree.texts.size(), 0),
      exhausted_(tree.nodes.size(), false) {
  params.validate();
}

namespace {

struct Scored {
  Query query;
  double score;
};

double max_cos_against(const EmbeddingVector& e, const std::vector<Attempt>& attempts) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& a : attempts) best = std::max(best, cosine(e, a.embedding));
  return best;
}

std::string perturb(const ClusterTree& tree, const std::string& text, Rng& rng) {
  const auto units = token_units(text);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < units.size(); ++i)
    if (is_vocab_word(units[i])) eligible.push_back(i);
  if (eligible.empty()) return text;
  const std::size_t pos = eligible[uniform_index(rng, eligible.size())];
  std::string out;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i) out += ' ';
    out += i == pos ? tree.vocabulary_neighbour(units[i]) : units[i];
  }
  return out;
}

}  // namespace

Query next_query(const ClusterTree& tree, SearchState& state, Rng& rng) {
  if (state.hit) throw DomainError("search already succeeded");
  if (state.tree_ != &tree) throw DomainError("search state belongs to a different tree");
  const SearchParams& P = state.params;
  const double total_weight = tree.nodes[tree.root].weight;

  auto mark_exhausted = [&](std::size_t n) {
    state.exhausted_[n] = true;
    for (std::size_t p = tree.nodes[n].parent; p != kNoNode; p = tree.nodes[p].parent) {
      if (!(state.exhausted_[tree.nodes[p].left] && state.exhausted_[tree.nodes[p].right])) break;
      state.exhausted_[p] = true;
    }
  };
  auto member_max_cos = [&](std::size_t m) {
    double& v = state.max_cos_[m];
    std::size_t& seen = state.max_cos_seen_[m];
    for (; seen < state.attempts.size(); ++seen)
      v = std::max(v, cosine(tree.embedding(m), state.attempts[seen].embedding));
    return v;
  };

  for (;;) {
    if (state.exhausted_[tree.root]) throw Exhausted("no candidate passes the diversity gate");
    std::size_t node = tree.root;
    while (!tree.nodes[node].is_leaf()) {
      const auto& n = tree.nodes[node];
      auto pull = [&](std::size_t c) {
        if (state.exhausted_[c]) return 0.0;
        const double per_leaf = static_cast<double>(state.visits[c]) / static_cast<double>(tree.leaf_count(c));
        return tree.nodes[c].weight * (1.0 + P.novelty_u / (1.0 + per_leaf));
      };
      const double wl = pull(n.left), wr = pull(n.right);
      if (P.descent == DescentMode::greedy) {
        node = wl >= wr ? n.left : n.right;
      } else {
        node = uniform01(rng) * (wl + wr) < wl ? n.left : n.right;
      }
    }
    const ClusterNode& leaf = tree.nodes[node];
    const bool explore = P.explore_p > 0.0 && uniform01(rng) < P.explore_p;
    const double cluster_term = P.w_clu * leaf.weight / total_weight;

    auto exploit = [&]() {
      std::vector<Scored> out;
      for (std::size_t m : tree.members_by_centroid(node)) {
        if (out.size() >= P.candidates_per_leaf) break;
        if (state.tried_members_.count(m) != 0) continue;
        const double mc = member_max_cos(m);
        if (mc >= P.diversity_threshold) continue;
        Query q{tree.texts[m], tree.embedding(m), node, m, m};
        const double hist = std::isfinite(mc) ? mc : 0.0;
        out.push_back({std::move(q), P.w_rep * cosine(tree.embedding(m), leaf.centroid) -
                                         P.w_hist * hist + cluster_term});
      }
      return out;
    };
    auto peripheral = [&]() {
      std::vector<Scored> out;
      const auto& ranked = tree.members_by_centroid(node);
      const std::size_t pool = std::min(ranked.size(), P.candidates_per_leaf);
      for (std::size_t tries = 0; tries < 4 * P.candidates_per_leaf && out.size() < P.candidates_per_leaf; ++tries) {
        const std::size_t base = ranked[uniform_index(rng, pool)];
        std::string text = perturb(tree, tree.texts[base], rng);
        if (state.tried_texts_.count(text) != 0) continue;
        EmbeddingVector e = embed(text);
        const double mc = max_cos_against(e, state.attempts);
        if (mc >= P.diversity_threshold) continue;
        bool duplicate = false;
        for (const auto& s : out) duplicate = duplicate || s.query.text == text;
        if (duplicate) continue;
        const double score = P.w_rep * cosine(e, leaf.centroid) - P.w_hist * (std::isfinite(mc) ? mc : 0.0) +
                             cluster_term;
        out.push_back({Query{std::move(text), std::move(e), node, std::nullopt, base}, score});
      }
      return out;
    };

    std::vector<Scored> cands = explore ? peripheral() : exploit();
    if (cands.empty()) cands = explore ? exploit() : peripheral();
    if (cands.empty()) {
      mark_exhausted(node);
      continue;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
      if (cands[i].score > cands[best].score) best = i;
    return std::move(cands[best].query);
  }
}

void record_result(SearchState& state, const Query& query, bool hit) {
  state.attempts.push_back({query.text, query.embedding, query.leaf, query.member, query.source_member, hit});
  if (query.member) state.tried_members_.insert(*query.member);
  state.tried_texts_.insert(query.text);
  const auto& nodes = state.tree_->nodes;
  for (std::size_t n = query.leaf; n != kNoNode; n = nodes[n].parent) ++state.visits[n];
  if (hit) state.hit = true;
}

SemanticAttackReport run_attack(ServingNode& node, const ClusterTree& tree,
                                std::size_t budget_probes, const SemanticClassifier& classifier,
                                Rng& rng, const SearchParams& params,
                                const SemanticAttackOptions& options) {
  SearchState state(tree, params);
  SemanticAttackReport report;
  std::size_t limited_streak = 0;
  while (state.attempts.size() < budget_probes) {
    Query q;
    try {
      q = next_query(tree, state, rng);
    } catch (const Exhausted&) {
      report.exhausted = true;
      break;
    }
    const Request request = Request::text(options.user, q.text, 1);
    std::optional<RequestOutcome> outcome;
    while (!outcome) {
      SubmitResult r = node.submit(request, rng);
      if (const auto* limited = std::get_if<RateLimited>(&r)) {
        if (++limited_streak >= options.max_rate_limited_streak) return report;
        node.advance_clock(std::max(limited->retry_after - node.now(), VirtualDuration(1)));
        continue;
      }
      limited_streak = 0;
      outcome = std::move(std::get<RequestOutcome>(r));
    }
    node.advance_clock(from_seconds(outcome->ttft) + options.think_time);
    const bool hit = classifier.is_hit(outcome->ttft);
    record_result(state, q, hit);
    report.probes_used = state.attempts.size();
    if (hit) {
      report.claimed_hit = true;
      report.category = tree.label_of(q.member.value_or(q.source_member));
      report.hit_query = q.text;
      report.hit_outcome = std::move(outcome);
      break;
    }
  }
  return report;
}

}  // namespace cachelab
