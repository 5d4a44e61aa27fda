// Copyright 2026 The tilesearch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "tilesearch/ann_forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "tilesearch/error.hpp"
#include "tilesearch/random.hpp"

namespace tilesearch {
namespace {

constexpr char kMagic[4] = {'T', 'S', 'F', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr int kSplitAttempts = 3;

double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += static_cast<double>(a[i]) * b[i];
  return sum;
}

double dot(std::span<const float> a, std::span<const double> b) noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

class TreeBuilder {
 public:
  TreeBuilder(const EmbeddingMatrix& items, std::span<const double> norms,
              const ForestParams& params, std::uint64_t tree_index)
      : items_(items),
        norms_(norms),
        metric_(params.metric),
        leaf_capacity_(params.leaf_capacity),
        rng_(PortableRng::stream(params.seed, tree_index)),
        normal_(items.dimension()) {}

  AnnForest::Tree build() {
    std::vector<ItemId> ids(items_.rows());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;

    struct Task {
      std::size_t begin;
      std::size_t end;
      std::uint64_t parent;  // max() for the root
      bool is_right;
    };
    constexpr auto kNoParent = std::numeric_limits<std::uint64_t>::max();

    // Explicit stack: unbalanced splits could otherwise recurse once per item.
    std::vector<Task> stack{{0, ids.size(), kNoParent, false}};
    while (!stack.empty()) {
      const Task task = stack.back();
      stack.pop_back();

      const std::uint64_t node_id = tree_.nodes.size();
      if (task.parent != kNoParent) {
        auto& parent = tree_.nodes[task.parent];
        (task.is_right ? parent.right : parent.left) = node_id;
      }

      std::span<ItemId> span(ids.data() + task.begin, task.end - task.begin);
      if (span.size() <= leaf_capacity_) {
        AnnForest::Node leaf;
        leaf.kind = AnnForest::NodeKind::kLeaf;
        leaf.first = tree_.leaf_ids.size();
        leaf.count = static_cast<std::uint32_t>(span.size());
        tree_.leaf_ids.insert(tree_.leaf_ids.end(), span.begin(), span.end());
        tree_.nodes.push_back(leaf);
        continue;
      }

      float offset = 0.0f;
      const std::size_t n_left = split(span, offset);

      AnnForest::Node node;
      node.kind = AnnForest::NodeKind::kSplit;
      node.offset = offset;
      node.first = tree_.normals.size();
      tree_.normals.insert(tree_.normals.end(), normal_.begin(), normal_.end());
      tree_.nodes.push_back(node);

      // Right pushed first so the left subtree is emitted next (preorder).
      stack.push_back({task.begin + n_left, task.end, node_id, true});
      stack.push_back({task.begin, task.begin + n_left, node_id, false});
    }
    return std::move(tree_);
  }

 private:
  /// Fills normal_ and offset, reorders `ids` so the left side comes first,
  /// and returns the size of the left side (always in [1, size-1]).
  std::size_t split(std::span<ItemId> ids, float& offset) {
    const std::size_t n = ids.size();
    bool have_normal = false;
    for (int attempt = 0; attempt < kSplitAttempts; ++attempt) {
      const std::size_t i = rng_.uniform_below(n);
      std::size_t j = rng_.uniform_below(n - 1);
      if (j >= i) ++j;
      if (!sample_hyperplane(ids[i], ids[j], offset)) continue;
      have_normal = true;
      auto mid = std::partition(ids.begin(), ids.end(), [&](ItemId id) {
        return margin(id, offset) <= 0.0;
      });
      const auto n_left = static_cast<std::size_t>(mid - ids.begin());
      if (n_left > 0 && n_left < n) return n_left;
    }

    // Duplicate-heavy data: fall back to alternating assignment.
    if (!have_normal) {
      std::fill(normal_.begin(), normal_.end(), 0.0f);
      normal_[0] = 1.0f;
      offset = 0.0f;
    }
    std::sort(ids.begin(), ids.end());
    std::vector<ItemId> scratch(ids.begin(), ids.end());
    std::size_t out = 0;
    for (std::size_t k = 0; k < n; k += 2) ids[out++] = scratch[k];
    const std::size_t n_left = out;
    for (std::size_t k = 1; k < n; k += 2) ids[out++] = scratch[k];
    return n_left;
  }

  /// Unit normal through the midpoint of items a and b (for angular, through
  /// the origin between their directions). False if the normal vanishes.
  bool sample_hyperplane(ItemId a, ItemId b, float& offset) {
    const auto pa = items_.row(a);
    const auto pb = items_.row(b);
    const std::size_t dim = pa.size();
    std::vector<double> diff(dim);
    if (metric_ == Metric::kAngular) {
      const double ia = 1.0 / norms_[a];
      const double ib = 1.0 / norms_[b];
      for (std::size_t k = 0; k < dim; ++k) diff[k] = pa[k] * ia - pb[k] * ib;
    } else {
      for (std::size_t k = 0; k < dim; ++k) diff[k] = static_cast<double>(pa[k]) - pb[k];
    }
    double norm = 0.0;
    for (double d : diff) norm += d * d;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) return false;
    for (std::size_t k = 0; k < dim; ++k) normal_[k] = static_cast<float>(diff[k] / norm);
    if (metric_ == Metric::kAngular) {
      offset = 0.0f;
    } else {
      double off = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        off += normal_[k] * (0.5 * (static_cast<double>(pa[k]) + pb[k]));
      }
      offset = static_cast<float>(off);
    }
    return true;
  }

  double margin(ItemId id, float offset) const {
    return dot(normal_, items_.row(id)) - offset;
  }

  const EmbeddingMatrix& items_;
  std::span<const double> norms_;
  Metric metric_;
  std::uint32_t leaf_capacity_;
  PortableRng rng_;
  std::vector<float> normal_;
  AnnForest::Tree tree_;
};

struct FrontierEntry {
  double priority;
  std::uint32_t tree;
  std::uint32_t query;
  std::uint64_t node;

  // Max-heap on priority; deterministic tie order.
  friend bool operator<(const FrontierEntry& a, const FrontierEntry& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    if (a.tree != b.tree) return a.tree > b.tree;
    if (a.query != b.query) return a.query > b.query;
    return a.node > b.node;
  }
};

void sort_neighbors(std::vector<Neighbor>& v, std::size_t k) {
  const auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  const std::size_t keep = std::min(k, v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(keep), v.end(), less);
  v.resize(keep);
}

}  // namespace

std::size_t default_search_budget(std::size_t k, std::size_t n_trees) noexcept {
  return std::max(k * n_trees, kMinSearchBudget);
}

void AnnForest::compute_norms() {
  norms_.resize(items_.rows());
  for (std::size_t i = 0; i < items_.rows(); ++i) norms_[i] = l2_norm(items_.row(i));
}

AnnForest AnnForest::build(EmbeddingMatrix items, const ForestParams& params) {
  if (params.n_trees == 0) throw Error(ErrorCode::kInvalidArgument, "n_trees must be at least 1");
  if (params.leaf_capacity == 0) {
    throw Error(ErrorCode::kInvalidArgument, "leaf_capacity must be at least 1");
  }
  if (items.dimension() == 0) throw Error(ErrorCode::kInvalidArgument, "dimension must be positive");
  for (std::size_t i = 0; i < items.rows(); ++i) {
    try {
      validate_embedding(items.row(i), items.dimension(), params.metric);
    } catch (const Error& e) {
      throw Error(e.code(), "item " + std::to_string(i) + ": " + e.what());
    }
  }

  AnnForest forest;
  forest.metric_ = params.metric;
  forest.leaf_capacity_ = params.leaf_capacity;
  forest.seed_ = params.seed;
  forest.items_ = std::move(items);
  forest.compute_norms();
  forest.trees_.resize(params.n_trees);

  unsigned threads = params.build_threads != 0 ? params.build_threads
                                               : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, params.n_trees);
  std::atomic<std::uint32_t> next{0};
  auto worker = [&] {
    for (std::uint32_t t = next++; t < params.n_trees; t = next++) {
      forest.trees_[t] = TreeBuilder(forest.items_, forest.norms_, params, t).build();
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  return forest;
}

void AnnForest::validate_query(const QuerySpec& spec) const {
  if (spec.queries.empty()) throw Error(ErrorCode::kInvalidArgument, "query list is empty");
  if (spec.k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be positive");
  if (spec.search_budget && *spec.search_budget < spec.k) {
    throw Error(ErrorCode::kInvalidArgument, "search_budget must be at least k");
  }
  for (const auto& q : spec.queries) validate_embedding(q, dimension(), metric_);
}

std::vector<ItemId> AnnForest::candidates(const QuerySpec& spec) const {
  validate_query(spec);
  std::vector<ItemId> found;
  if (size() == 0) return found;

  const std::size_t budget =
      spec.search_budget.value_or(default_search_budget(spec.k, trees_.size()));

  // Margins for angular splits are taken against the unit query direction.
  std::vector<std::vector<double>> directions;
  directions.reserve(spec.queries.size());
  for (const auto& q : spec.queries) {
    std::vector<double> d(q.begin(), q.end());
    if (metric_ == Metric::kAngular) {
      const double n = l2_norm(q);
      for (double& x : d) x /= n;
    }
    directions.push_back(std::move(d));
  }

  std::priority_queue<FrontierEntry> frontier;
  for (std::uint32_t qi = 0; qi < directions.size(); ++qi) {
    for (std::uint32_t t = 0; t < trees_.size(); ++t) {
      frontier.push({std::numeric_limits<double>::infinity(), t, qi, 0});
    }
  }

  std::vector<bool> seen(size(), false);
  while (found.size() < budget && !frontier.empty()) {
    const FrontierEntry top = frontier.top();
    frontier.pop();
    const Tree& tree = trees_[top.tree];
    const Node& node = tree.nodes[top.node];
    if (node.kind == NodeKind::kLeaf) {
      for (ItemId id : tree.leaf_items(node)) {
        if (!seen[id]) {
          seen[id] = true;
          found.push_back(id);
        }
      }
      continue;
    }
    const std::span<const float> normal(tree.normals.data() + node.first, dimension());
    const double m = dot(normal, std::span<const double>(directions[top.query])) - node.offset;
    frontier.push({std::min(top.priority, m), top.tree, top.query, node.right});
    frontier.push({std::min(top.priority, -m), top.tree, top.query, node.left});
  }
  return found;
}

std::vector<Neighbor> AnnForest::query(const QuerySpec& spec) const {
  const std::vector<ItemId> ids = candidates(spec);
  std::vector<double> query_norms;
  for (const auto& q : spec.queries) query_norms.push_back(l2_norm(q));

  std::vector<Neighbor> ranked;
  ranked.reserve(ids.size());
  for (ItemId id : ids) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t qi = 0; qi < spec.queries.size(); ++qi) {
      best = std::min(best, distance_with_norms(spec.queries[qi], query_norms[qi],
                                                items_.row(id), norms_[id], metric_));
    }
    ranked.push_back({id, best});
  }
  sort_neighbors(ranked, spec.k);
  return ranked;
}

std::vector<Neighbor> brute_force(const EmbeddingMatrix& items, std::span<const float> query,
                                  std::size_t k, Metric metric) {
  std::vector<Neighbor> all;
  all.reserve(items.rows());
  for (std::size_t i = 0; i < items.rows(); ++i) {
    all.push_back({i, distance(query, items.row(i), metric)});
  }
  sort_neighbors(all, k);
  return all;
}

void AnnForest::write(std::ostream& out) const {
  detail::LittleEndianWriter w(out);
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dimension()));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(metric_));
  w.put<std::uint32_t>(n_trees());
  w.put<std::uint32_t>(leaf_capacity_);
  w.put<std::uint64_t>(seed_);
  w.put<std::uint64_t>(size());
  w.put_array(items_.values());
  for (const Tree& tree : trees_) {
    w.put<std::uint64_t>(tree.nodes.size());
    for (const Node& node : tree.nodes) {
      w.put<std::uint8_t>(static_cast<std::uint8_t>(node.kind));
      if (node.kind == NodeKind::kSplit) {
        w.put_array(std::span<const float>(tree.normals.data() + node.first, dimension()));
        w.put<float>(node.offset);
        w.put<std::uint64_t>(node.left);
        w.put<std::uint64_t>(node.right);
      } else {
        w.put<std::uint32_t>(node.count);
        w.put_array(tree.leaf_items(node));
      }
    }
  }
}

void AnnForest::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  write(out);
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

AnnForest AnnForest::read(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kCorruptIndex, "bad magic (expected TSF1)");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kCorruptIndex, "unsupported version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint32_t>("dimension");
  if (dim == 0) throw Error(ErrorCode::kCorruptIndex, "dimension is zero");
  const auto metric = r.get<std::uint8_t>("metric");
  if (metric > 1) throw Error(ErrorCode::kCorruptIndex, "unknown metric tag " + std::to_string(metric));
  const auto n_trees = r.get<std::uint32_t>("n_trees");
  if (n_trees == 0) throw Error(ErrorCode::kCorruptIndex, "n_trees is zero");
  const auto leaf_capacity = r.get<std::uint32_t>("leaf_capacity");
  if (leaf_capacity == 0) throw Error(ErrorCode::kCorruptIndex, "leaf_capacity is zero");
  const auto seed = r.get<std::uint64_t>("seed");
  const auto n_items = r.get<std::uint64_t>("n_items");
  if (n_items > r.remaining() / (sizeof(float) * dim)) {
    throw Error(ErrorCode::kCorruptIndex, "truncated while reading items");
  }

  AnnForest forest;
  forest.metric_ = static_cast<Metric>(metric);
  forest.leaf_capacity_ = leaf_capacity;
  forest.seed_ = seed;
  std::vector<float> values(n_items * dim);
  r.get_array(std::span<float>(values), "items");
  forest.items_ = EmbeddingMatrix(dim, std::move(values));
  forest.compute_norms();

  // Each tree needs at least a node count and one empty leaf (13 bytes).
  if (n_trees > r.remaining() / 13) {
    throw Error(ErrorCode::kCorruptIndex, "n_trees " + std::to_string(n_trees) + " exceeds the file size");
  }
  forest.trees_.resize(n_trees);
  for (std::uint32_t t = 0; t < n_trees; ++t) {
    Tree& tree = forest.trees_[t];
    const auto node_count = r.get<std::uint64_t>("node count");
    // Smallest possible record is an empty leaf (5 bytes).
    if (node_count == 0 || node_count > r.remaining() / 5) {
      throw Error(ErrorCode::kCorruptIndex,
                  "invalid node count " + std::to_string(node_count) + " in tree " + std::to_string(t));
    }
    tree.nodes.resize(node_count);
    for (std::uint64_t id = 0; id < node_count; ++id) {
      Node& node = tree.nodes[id];
      const auto tag = r.get<std::uint8_t>("node tag");
      if (tag == static_cast<std::uint8_t>(NodeKind::kSplit)) {
        node.kind = NodeKind::kSplit;
        node.first = tree.normals.size();
        tree.normals.resize(tree.normals.size() + dim);
        r.get_array(std::span<float>(tree.normals.data() + node.first, dim), "split normal");
        node.offset = r.get<float>("split offset");
        node.left = r.get<std::uint64_t>("split left child");
        node.right = r.get<std::uint64_t>("split right child");
        // Preorder layout: children always follow their parent.
        if (node.left <= id || node.left >= node_count || node.right <= id ||
            node.right >= node_count) {
          throw Error(ErrorCode::kCorruptIndex, "child id out of range in tree " + std::to_string(t));
        }
      } else if (tag == static_cast<std::uint8_t>(NodeKind::kLeaf)) {
        node.kind = NodeKind::kLeaf;
        node.count = r.get<std::uint32_t>("leaf count");
        if (node.count > r.remaining() / sizeof(ItemId)) {
          throw Error(ErrorCode::kCorruptIndex, "truncated while reading leaf item ids");
        }
        node.first = tree.leaf_ids.size();
        tree.leaf_ids.resize(tree.leaf_ids.size() + node.count);
        r.get_array(std::span<ItemId>(tree.leaf_ids.data() + node.first, node.count), "leaf item ids");
        for (ItemId item : tree.leaf_items(node)) {
          if (item >= n_items) {
            throw Error(ErrorCode::kCorruptIndex, "leaf item id " + std::to_string(item) +
                                                      " out of range in tree " + std::to_string(t));
          }
        }
      } else {
        throw Error(ErrorCode::kCorruptIndex, "unknown node tag " + std::to_string(tag));
      }
    }
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::kCorruptIndex, "trailing bytes after last tree");
  }
  return forest;
}

AnnForest AnnForest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open index " + path.string());
  std::vector<char> buffer((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read(std::as_bytes(std::span<const char>(buffer)));
}

}  // namespace tilesearch
