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
#include "tilesearch/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "tilesearch/random.hpp"

namespace tilesearch {

double percentile(std::vector<double> samples, double p) {
  if (samples.empty()) return 0.0;
  std::sort(samples.begin(), samples.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

double recall_at_k(const std::vector<Neighbor>& approx, const std::vector<Neighbor>& exact) {
  if (exact.empty()) return 1.0;
  std::unordered_set<ItemId> got;
  for (const auto& n : approx) got.insert(n.id);
  std::size_t hits = 0;
  for (const auto& n : exact) hits += got.count(n.id);
  return static_cast<double>(hits) / static_cast<double>(exact.size());
}

EvalReport evaluate(const AnnForest& forest, const std::vector<std::vector<float>>& queries,
                    const EvalOptions& options) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  EvalReport report;
  report.queries = queries.size();
  report.k = options.k;
  report.search_budget = options.search_budget.value_or(default_search_budget(options.k, forest.n_trees()));
  std::vector<double> latencies;
  latencies.reserve(queries.size());
  double recall_sum = 0.0;
  for (const auto& q : queries) {
    QuerySpec spec{{q}, options.k, report.search_budget};
    const auto t0 = Clock::now();
    const auto approx = forest.query(spec);
    latencies.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    recall_sum += recall_at_k(approx, brute_force(forest.items(), q, options.k, forest.metric()));
  }
  if (!queries.empty()) report.mean_recall = recall_sum / static_cast<double>(queries.size());
  report.p50_ms = percentile(latencies, 0.50);
  report.p95_ms = percentile(latencies, 0.95);
  report.max_ms = latencies.empty() ? 0.0 : *std::max_element(latencies.begin(), latencies.end());
  report.total_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

EvalReport evaluate_sampled(const AnnForest& forest, const EvalOptions& options) {
  const std::size_t n = forest.size();
  const std::size_t m = std::min(options.n_queries, n);
  std::vector<ItemId> ids(n);
  std::iota(ids.begin(), ids.end(), ItemId{0});
  PortableRng rng(options.seed);
  for (std::size_t i = 0; i < m; ++i) {
    std::swap(ids[i], ids[i + rng.uniform_below(n - i)]);
  }
  std::vector<std::vector<float>> queries;
  queries.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = forest.items().row(ids[i]);
    queries.emplace_back(row.begin(), row.end());
  }
  return evaluate(forest, queries, options);
}

}  // namespace tilesearch
