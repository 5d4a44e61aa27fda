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
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tilesearch/distance.hpp"

namespace tilesearch {

inline constexpr std::uint32_t kDefaultTrees = 50;
inline constexpr std::uint32_t kDefaultLeafCapacity = 16;
inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr std::size_t kMinSearchBudget = 2000;

struct ForestParams {
  std::uint32_t n_trees = kDefaultTrees;
  std::uint32_t leaf_capacity = kDefaultLeafCapacity;
  Metric metric = Metric::kAngular;
  std::uint64_t seed = kDefaultSeed;
  /// Worker threads for tree construction; 0 picks the hardware count.
  /// Output does not depend on this value.
  unsigned build_threads = 0;
};

struct Neighbor {
  ItemId id = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct QuerySpec {
  /// First entry is the primary query; extra entries rank by minimum
  /// distance over all queries.
  std::vector<std::vector<float>> queries;
  std::size_t k = 10;
  /// Minimum distinct candidates to inspect. Unset means
  /// default_search_budget(k, n_trees).
  std::optional<std::size_t> search_budget;
};

/// max(k * n_trees, 2000).
std::size_t default_search_budget(std::size_t k, std::size_t n_trees) noexcept;

/// Forest of random-hyperplane binary trees.
///
/// Each tree recursively splits its point set with a hyperplane through the
/// midpoint of two sampled items until a node holds at most leaf_capacity
/// ids. Queries walk every tree at once from a single best-first frontier
/// ordered by margin to the hyperplanes crossed so far, gather candidates,
/// and re-rank them by exact distance.
///
/// Immutable after build() or load(); concurrent queries need no locking.
class AnnForest {
 public:
  enum class NodeKind : std::uint8_t { kSplit = 0, kLeaf = 1 };

  struct Node {
    NodeKind kind = NodeKind::kLeaf;
    float offset = 0.0f;
    std::uint64_t left = 0;
    std::uint64_t right = 0;
    /// Split: start of the normal in Tree::normals. Leaf: start in
    /// Tree::leaf_ids.
    std::uint64_t first = 0;
    std::uint32_t count = 0;
  };

  /// Nodes in preorder; node 0 is the root.
  struct Tree {
    std::vector<Node> nodes;
    std::vector<float> normals;
    std::vector<ItemId> leaf_ids;

    std::span<const ItemId> leaf_items(const Node& leaf) const {
      return {leaf_ids.data() + leaf.first, leaf.count};
    }
  };

  AnnForest() = default;

  /// Throws kInvalidArgument for zero trees, zero leaf capacity, a zero
  /// dimension, or items violating validate_embedding(). An empty item set
  /// yields n_trees empty root leaves.
  static AnnForest build(EmbeddingMatrix items, const ForestParams& params);

  /// Ranked (id, distance) pairs, ascending distance then ascending id.
  std::vector<Neighbor> query(const QuerySpec& spec) const;

  /// Candidate ids in discovery order, before exact re-ranking.
  std::vector<ItemId> candidates(const QuerySpec& spec) const;

  void save(const std::filesystem::path& path) const;
  static AnnForest load(const std::filesystem::path& path);
  void write(std::ostream& out) const;
  static AnnForest read(std::span<const std::byte> bytes);

  std::size_t dimension() const noexcept { return items_.dimension(); }
  Metric metric() const noexcept { return metric_; }
  std::size_t size() const noexcept { return items_.rows(); }
  std::uint32_t n_trees() const noexcept { return static_cast<std::uint32_t>(trees_.size()); }
  std::uint32_t leaf_capacity() const noexcept { return leaf_capacity_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const EmbeddingMatrix& items() const noexcept { return items_; }
  const Tree& tree(std::size_t i) const { return trees_.at(i); }

 private:
  void validate_query(const QuerySpec& spec) const;
  void compute_norms();

  Metric metric_ = Metric::kAngular;
  std::uint32_t leaf_capacity_ = kDefaultLeafCapacity;
  std::uint64_t seed_ = kDefaultSeed;
  EmbeddingMatrix items_;
  std::vector<double> norms_;
  std::vector<Tree> trees_;
};

/// Exact k nearest by full scan; same ordering contract as
/// AnnForest::query().
std::vector<Neighbor> brute_force(const EmbeddingMatrix& items,
                                  std::span<const float> query, std::size_t k,
                                  Metric metric);

}  // namespace tilesearch
