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
#include "tilesearch/ingest.hpp"

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <thread>
#include <variant>

#include "tilesearch/error.hpp"

namespace tilesearch {
using nlohmann::json;

namespace {

constexpr std::uint32_t kMaxTileMatrix = 30;

std::uint32_t parse_u32(std::string_view s, std::string_view whole) {
  std::uint32_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid range '" + std::string(whole) + "'");
  }
  return v;
}

/// Spaces request starts at least `interval` apart across all workers.
class RequestPacer {
 public:
  explicit RequestPacer(std::chrono::milliseconds interval) : interval_(interval) {}

  void wait_turn() {
    if (interval_.count() == 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  std::chrono::milliseconds interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

struct Fetched {
  std::vector<float> embedding;
};
struct Failed {
  std::string error;
};
struct Duplicate {};
using Outcome = std::variant<std::monostate, Duplicate, Fetched, Failed>;

}  // namespace

GridSize grid_bounds(std::uint32_t tile_matrix) {
  if (tile_matrix > kMaxTileMatrix) {
    throw Error(ErrorCode::kInvalidArgument,
                "tile matrix level " + std::to_string(tile_matrix) + " exceeds " + std::to_string(kMaxTileMatrix));
  }
  return {1ULL << tile_matrix, 1ULL << (tile_matrix + 1)};
}

IndexRange IndexRange::parse(std::string_view text) {
  const auto sep = text.find_first_of(":-");
  IndexRange r;
  if (sep == std::string_view::npos) {
    r.min = r.max = parse_u32(text, text);
  } else {
    r.min = parse_u32(text.substr(0, sep), text);
    r.max = parse_u32(text.substr(sep + 1), text);
  }
  if (r.max < r.min) throw Error(ErrorCode::kInvalidArgument, "range '" + std::string(text) + "' is empty");
  return r;
}

void CrawlSpec::validate() const {
  validate_layer(layer);
  if (dates.empty()) throw Error(ErrorCode::kInvalidArgument, "crawl needs at least one date");
  if (max_parallel == 0) throw Error(ErrorCode::kInvalidArgument, "max_parallel must be positive");
  const GridSize grid = grid_bounds(tile_matrix);
  if (rows.max < rows.min || cols.max < cols.min) {
    throw Error(ErrorCode::kInvalidArgument, "row and column ranges must be nonempty");
  }
  if (rows.max >= grid.rows || cols.max >= grid.cols) {
    throw Error(ErrorCode::kInvalidArgument,
                "range exceeds the level " + std::to_string(tile_matrix) + " grid of " +
                    std::to_string(grid.rows) + " rows x " + std::to_string(grid.cols) + " cols");
  }
  (void)UrlTemplate(url_template);
}

std::uint64_t CrawlSpec::coordinate_count() const noexcept {
  return dates.size() * rows.size() * cols.size();
}

json CrawlReport::to_json() const {
  json failures_json = json::array();
  for (const auto& f : failures) failures_json.push_back({{"url", f.url}, {"error", f.error}});
  json j{{"fetched", fetched},
         {"skipped_duplicates", skipped_duplicates},
         {"failed", failed},
         {"failures", failures_json},
         {"elapsed_seconds", elapsed_seconds},
         {"aborted", aborted}};
  if (aborted) j["abort_reason"] = abort_reason;
  return j;
}

CrawlReport crawl(const CrawlSpec& spec, EmbeddingStore& store, Featurizer* featurizer) {
  const auto started = std::chrono::steady_clock::now();
  spec.validate();
  std::unique_ptr<Featurizer> owned;
  if (!featurizer) {
    ProviderOptions options;
    options.timeout = spec.timeout;
    options.retry = spec.retry;
    options.max_in_flight = spec.max_parallel;
    owned = make_featurizer(spec.provider, options);
    featurizer = owned.get();
  }
  if (featurizer->descriptor().dimension != store.dimension()) {
    throw Error(ErrorCode::kInvalidArgument,
                "provider dimension " + std::to_string(featurizer->descriptor().dimension) +
                    " does not match store dimension " + std::to_string(store.dimension()));
  }
  const json provenance = featurizer->provenance();
  if (store.manifest().featurizer.is_null()) {
    store.set_featurizer(provenance);
  } else if (store.manifest().featurizer != provenance) {
    throw Error(ErrorCode::kInvalidArgument,
                "store embeddings came from a different featurizer: " + store.manifest().featurizer.dump());
  }

  const UrlTemplate url_template(spec.url_template);
  std::vector<TileKey> keys;
  keys.reserve(spec.coordinate_count());
  for (const TileDate& date : spec.dates) {
    for (std::uint64_t row = spec.rows.min; row <= spec.rows.max; ++row) {
      for (std::uint64_t col = spec.cols.min; col <= spec.cols.max; ++col) {
        keys.push_back({spec.layer, date, spec.tile_matrix, static_cast<std::uint32_t>(row),
                        static_cast<std::uint32_t>(col)});
      }
    }
  }

  std::vector<Outcome> outcomes(keys.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (store.contains(keys[i])) {
      outcomes[i] = Duplicate{};
    } else {
      todo.push_back(i);
    }
  }

  std::mutex mu;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  RequestPacer pacer(spec.min_request_interval);

  auto worker = [&] {
    HttpSession session(spec.timeout);
    for (std::size_t t = next++; t < todo.size() && !stop; t = next++) {
      const std::size_t i = todo[t];
      const std::string url = url_template.resolve(keys[i]);
      Outcome outcome;
      try {
        const HttpResult r = with_retries(
            [&] {
              pacer.wait_turn();
              return session.get(url);
            },
            spec.retry);
        if (r.transport_failed()) {
          outcome = Failed{"transport error: " + r.transport_error};
        } else if (r.status != 200) {
          outcome = Failed{"HTTP " + std::to_string(r.status)};
        } else {
          const auto* bytes = reinterpret_cast<const std::uint8_t*>(r.body.data());
          const std::span<const std::uint8_t> raw(bytes, r.body.size());
          auto format = format_from_content_type(r.content_type);
          if (!format) format = sniff_format(raw);
          if (!format) {
            outcome = Failed{"unrecognized image type '" + r.content_type + "'"};
          } else {
            outcome = Fetched{featurizer->embed(normalize_tile(raw, *format))};
          }
        }
      } catch (const Error& e) {
        outcome = Failed{std::string(error_code_name(e.code())) + ": " + e.what()};
      } catch (const std::exception& e) {
        outcome = Failed{e.what()};
      }
      {
        std::lock_guard lock(mu);
        outcomes[i] = std::move(outcome);
      }
      ready.notify_all();
    }
  };

  std::vector<std::jthread> pool;
  const std::size_t n_workers = std::min<std::size_t>(spec.max_parallel, todo.size());
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);

  // Single writer: consume outcomes in coordinate order.
  CrawlReport report;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    Outcome outcome;
    {
      std::unique_lock lock(mu);
      ready.wait(lock, [&] { return !std::holds_alternative<std::monostate>(outcomes[i]); });
      outcome = std::move(outcomes[i]);
    }
    if (std::holds_alternative<Duplicate>(outcome)) {
      ++report.skipped_duplicates;
    } else if (auto* failed = std::get_if<Failed>(&outcome)) {
      ++report.failed;
      report.failures.push_back({url_template.resolve(keys[i]), failed->error});
    } else {
      try {
        store.insert(keys[i], std::get<Fetched>(outcome).embedding);
        ++report.fetched;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kInvalidArgument) {
          // Provider output the store rejects (e.g. non-finite values).
          ++report.failed;
          report.failures.push_back({url_template.resolve(keys[i]), e.what()});
          continue;
        }
        report.aborted = true;
        report.abort_reason = e.what();
        stop = true;
        break;
      }
    }
  }
  pool.clear();
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace tilesearch
