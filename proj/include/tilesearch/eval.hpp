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
#include <optional>
#include <string>
#include <vector>

#include "tilesearch/ann_forest.hpp"

namespace tilesearch {

struct EvalOptions {
  std::size_t n_queries = 100;
  std::size_t k = 10;
  std::optional<std::size_t> search_budget;  // unset: default_search_budget
  std::uint64_t seed = kDefaultSeed;
};

struct EvalReport {
  std::size_t queries = 0;
  std::size_t k = 0;
  std::size_t search_budget = 0;
  double mean_recall = 0.0;  // meaningless when queries == 0
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double max_ms = 0.0;
  double total_seconds = 0.0;
};

/// Nearest-rank percentile (p in (0, 1]) of unsorted samples; 0 if empty.
double percentile(std::vector<double> samples, double p);

/// Fraction of `exact` ids that appear in `approx`.
double recall_at_k(const std::vector<Neighbor>& approx, const std::vector<Neighbor>& exact);

/// Queries `forest` with `queries` and scores each answer against
/// brute_force() over the forest's own items. Latency covers query() only.
EvalReport evaluate(const AnnForest& forest, const std::vector<std::vector<float>>& queries,
                    const EvalOptions& options);

/// evaluate() with min(n_queries, size) distinct stored items, sampled
/// with PortableRng(seed), as the queries.
EvalReport evaluate_sampled(const AnnForest& forest, const EvalOptions& options);

}  // namespace tilesearch
