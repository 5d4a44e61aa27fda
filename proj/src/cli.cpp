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
#include "tilesearch/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "tilesearch/ann_forest.hpp"
#include "tilesearch/embedding_store.hpp"
#include "tilesearch/error.hpp"
#include "tilesearch/eval.hpp"
#include "tilesearch/featurizer.hpp"
#include "tilesearch/http_api.hpp"
#include "tilesearch/ingest.hpp"
#include "tilesearch/query_service.hpp"

namespace tilesearch {
using nlohmann::json;

namespace {

/// `--config FILE` for a subcommand: a flat JSON object keyed by long flag
/// names (underscores and dashes are interchangeable); arrays feed
/// multi-value options. Values only fill flags absent from the command
/// line. CLI11 reads config files for the top-level app only, so required
/// flags are tracked here and checked after the merge.
struct JsonFlags {
  CLI::App* sub = nullptr;
  std::string path;
  std::vector<CLI::Option*> required;

  CLI::Option* require(CLI::Option* opt) {
    required.push_back(opt);
    return opt;
  }
};

void add_config(JsonFlags& flags, CLI::App* sub) {
  flags.sub = sub;
  sub->add_option("--config", flags.path, "JSON file supplying flag values (flags win)");
}

void apply_config(const JsonFlags& flags) {
  if (!flags.path.empty()) {
    std::ifstream in(flags.path);
    if (!in) throw CLI::FileError::Missing(flags.path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
      std::string name = key;
      std::replace(name.begin(), name.end(), '_', '-');
      CLI::Option* opt = name == "config" ? nullptr : flags.sub->get_option_no_throw("--" + name);
      if (opt == nullptr) throw CLI::ConversionError("unknown config key '" + key + "'");
      if (opt->count() > 0 || value.is_null()) continue;
      const auto scalar = [&](const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number() || v.is_boolean()) return v.dump();
        throw CLI::ConversionError("config key '" + key + "' must be a string, number, boolean or array");
      };
      if (value.is_array()) {
        for (const auto& v : value) opt->add_result(scalar(v));
      } else {
        opt->add_result(scalar(value));
      }
      opt->run_callback();
    }
  }
  for (const CLI::Option* opt : flags.required) {
    if (opt->count() == 0) throw CLI::RequiredError(opt->get_name());
  }
}

int report_error(std::ostream& err, const std::exception& e) {
  if (const auto* te = dynamic_cast<const Error*>(&e)) {
    err << "error: " << error_code_name(te->code()) << ": " << te->what() << "\n";
  } else {
    err << "error: " << e.what() << "\n";
  }
  return kExitFatal;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "error reading " + path);
  return bytes;
}

struct IngestArgs {
  std::string layer;
  std::vector<std::string> dates;
  std::uint32_t level = 0;
  std::string rows;
  std::string cols;
  std::string url_template;
  std::string store;
  unsigned max_parallel = 4;
  std::string provider = "reference";
  std::string endpoint;
  std::uint64_t seed = kDefaultFeaturizerSeed;
  std::size_t dimension = kDefaultDimension;
  int retries = 3;
  int backoff_ms = 500;
  int min_interval_ms = 0;
  int timeout_ms = 30000;
};

int run_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
  CrawlSpec spec;
  spec.layer = a.layer;
  for (const auto& d : a.dates) spec.dates.push_back(TileDate::parse(d));
  spec.tile_matrix = a.level;
  const GridSize grid = grid_bounds(a.level);
  spec.rows = a.rows.empty() ? IndexRange{0, static_cast<std::uint32_t>(grid.rows - 1)} : IndexRange::parse(a.rows);
  spec.cols = a.cols.empty() ? IndexRange{0, static_cast<std::uint32_t>(grid.cols - 1)} : IndexRange::parse(a.cols);
  spec.url_template = a.url_template;
  spec.max_parallel = a.max_parallel;
  json provider{{"kind", a.provider}, {"seed", a.seed}, {"dimension", a.dimension}};
  if (!a.endpoint.empty()) provider["endpoint"] = a.endpoint;
  spec.provider = ProviderDescriptor::from_json(provider);
  spec.retry.max_retries = a.retries;
  spec.retry.base_backoff = std::chrono::milliseconds(a.backoff_ms);
  spec.min_request_interval = std::chrono::milliseconds(a.min_interval_ms);
  spec.timeout = std::chrono::milliseconds(a.timeout_ms);
  spec.validate();

  EmbeddingStore store = EmbeddingStore::exists(a.store)
                             ? EmbeddingStore::open(a.store, EmbeddingStore::Mode::kReadWrite)
                             : EmbeddingStore::create(a.store, spec.provider.dimension, a.url_template);
  if (store.manifest().url_template != a.url_template) {
    err << "warning: store resolves URLs with " << store.manifest().url_template
        << ", not the crawl template\n";
  }
  const CrawlReport report = crawl(spec, store);
  out << report.to_json().dump(2) << "\n";
  if (report.aborted) {
    err << "error: crawl aborted: " << report.abort_reason << "\n";
    return kExitFatal;
  }
  return report.failed == 0 ? kExitOk : kExitPartial;
}

struct BuildArgs {
  std::string store;
  std::string index;
  std::uint32_t trees = kDefaultTrees;
  std::uint32_t leaf = kDefaultLeafCapacity;
  std::string metric = "angular";
  std::uint64_t seed = kDefaultSeed;
  unsigned threads = 0;
};

int run_build(const BuildArgs& a, std::ostream& out, std::ostream& err) {
  const EmbeddingStore store = EmbeddingStore::open(a.store, EmbeddingStore::Mode::kReadOnly);
  ForestParams params;
  params.n_trees = a.trees;
  params.leaf_capacity = a.leaf;
  params.metric = parse_metric(a.metric);
  params.seed = a.seed;
  params.build_threads = a.threads;
  if (store.count() == 0) err << "warning: store " << a.store << " is empty; writing an empty index\n";
  const auto start = std::chrono::steady_clock::now();
  const AnnForest forest = AnnForest::build(store.export_embeddings(), params);
  forest.save(a.index);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << "items " << forest.size() << "\ntrees " << forest.n_trees() << "\nseconds " << std::fixed
      << std::setprecision(3) << seconds << "\n";
  return kExitOk;
}

struct QueryArgs {
  std::string index;
  std::string store;
  std::string image;
  std::optional<ItemId> id;
  std::size_t k = kDefaultK;
  std::optional<std::size_t> budget;
  bool json_output = false;
  bool exclude_self = false;
};

int run_query(const QueryArgs& a, std::ostream& out, std::ostream&) {
  if (a.image.empty() == !a.id.has_value()) {
    throw Error(ErrorCode::kInvalidArgument, "give exactly one of --image or --id");
  }
  auto forest = std::make_shared<const AnnForest>(AnnForest::load(a.index));
  auto store = std::make_shared<const EmbeddingStore>(EmbeddingStore::open(a.store, EmbeddingStore::Mode::kReadOnly));
  std::shared_ptr<Featurizer> featurizer = make_featurizer(provider_from_manifest(store->manifest()));
  const QueryService service(forest, store, featurizer);

  SearchRequest req;
  req.k = a.k;
  req.search_budget = a.budget;
  if (a.id) {
    if (*a.id >= store->count()) {
      throw Error(ErrorCode::kNotFound, "item " + std::to_string(*a.id) + " does not exist");
    }
    const auto e = store->embedding(*a.id);
    req.embedding = std::vector<float>(e.begin(), e.end());
    if (a.exclude_self) req.exclude_ids.push_back(*a.id);
  } else {
    req.image = read_file(a.image);
  }
  const SearchResponse resp = service.search(req);
  if (a.json_output) {
    out << resp.to_json().dump() << "\n";
    return kExitOk;
  }
  std::size_t rank = 1;
  for (const auto& r : resp.results) {
    out << rank++ << " " << std::fixed << std::setprecision(6) << r.distance << " " << r.url << "\n";
  }
  return kExitOk;
}

struct EvalArgs {
  std::string index;
  std::string store;
  std::size_t queries = 100;
  std::size_t k = 10;
  std::optional<std::size_t> budget;
  std::uint64_t seed = kDefaultSeed;
  bool json_output = false;
};

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const AnnForest forest = AnnForest::load(a.index);
  if (!a.store.empty()) {
    const EmbeddingStore store = EmbeddingStore::open(a.store, EmbeddingStore::Mode::kReadOnly);
    if (store.count() != forest.size()) {
      throw Error(ErrorCode::kInvalidArgument, "index holds " + std::to_string(forest.size()) +
                                                   " items but the store holds " +
                                                   std::to_string(store.count()) + "; rebuild the index");
    }
  }
  EvalOptions options;
  options.n_queries = a.queries;
  options.k = a.k;
  options.search_budget = a.budget;
  options.seed = a.seed;
  const EvalReport r = evaluate_sampled(forest, options);
  if (r.queries == 0) err << "warning: index is empty; nothing to evaluate\n";
  if (a.json_output) {
    json j{{"index_items", forest.size()}, {"queries", r.queries},   {"k", r.k},
           {"search_budget", r.search_budget}, {"seed", a.seed},     {"mean_recall", nullptr},
           {"p50_ms", r.p50_ms},              {"p95_ms", r.p95_ms}, {"max_ms", r.max_ms},
           {"total_seconds", r.total_seconds}};
    if (r.queries > 0) j["mean_recall"] = r.mean_recall;
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  out << "items " << forest.size() << "\nqueries " << r.queries << "\nk " << r.k << "\nsearch_budget "
      << r.search_budget << "\n";
  out << "recall@" << r.k << " ";
  if (r.queries > 0) {
    out << std::fixed << std::setprecision(4) << r.mean_recall << "\n";
  } else {
    out << "n/a\n";
  }
  out << std::fixed << std::setprecision(3) << "p50_ms " << r.p50_ms << "\np95_ms " << r.p95_ms << "\n";
  return kExitOk;
}

struct ServeArgs {
  std::string config;
  std::string index;
  std::string store;
  std::string bind;
  std::string cors_origin;
  std::string url_template;
};

json read_service_config(const ServeArgs& a) {
  json cfg = json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error(ErrorCode::kInvalidConfig, "cannot read config file " + a.config);
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kInvalidConfig, "config file " + a.config + " is not valid JSON: " + e.what());
    }
    if (!cfg.is_object()) throw Error(ErrorCode::kInvalidConfig, "config must be a JSON object");
  }
  if (!a.index.empty()) cfg["index"] = a.index;
  if (!a.store.empty()) cfg["store"] = a.store;
  if (!a.bind.empty()) cfg["bind"] = a.bind;
  if (!a.cors_origin.empty()) cfg["cors_origin"] = a.cors_origin;
  if (!a.url_template.empty()) cfg["url_template"] = a.url_template;
  return cfg;
}

int run_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  const ServiceConfig config = ServiceConfig::from_json(read_service_config(a));
  const auto service = QueryService::open(config);

  // Signals are taken synchronously by this thread; server threads
  // inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGHUP);
  sigset_t previous;
  pthread_sigmask(SIG_BLOCK, &signals, &previous);
  struct RestoreMask {
    sigset_t mask;
    ~RestoreMask() { pthread_sigmask(SIG_SETMASK, &mask, nullptr); }
  } restore{previous};

  HttpApiServer server(*service, config.cors_origin, config.access_log);
  const int port = server.bind(config.bind_host, config.bind_port);
  server.start();
  out << "listening on http://" << config.bind_host << ":" << port << std::endl;
  for (;;) {
    int sig = 0;
    if (sigwait(&signals, &sig) != 0) break;
    if (sig != SIGHUP) break;
    try {
      service->reload(config);
      err << "reloaded index and store\n";
    } catch (const std::exception& e) {
      err << "reload failed, keeping the previous snapshot: " << e.what() << "\n";
    }
  }
  server.stop();
  out << "stopped" << std::endl;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reverse image search over satellite imagery tiles", "tilesearch"};
  app.set_version_flag("--version", "tilesearch 0.1.0");
  app.require_subcommand(1);

  IngestArgs ingest_args;
  auto* ingest = app.add_subcommand("ingest", "Crawl a tile grid, embed each tile and append it to a store");
  JsonFlags ingest_flags;
  add_config(ingest_flags, ingest);
  ingest_flags.require(ingest->add_option("--layer", ingest_args.layer, "Imagery layer identifier"));
  ingest_flags.require(ingest->add_option("--dates", ingest_args.dates, "Dates (YYYY-MM-DD), comma separated")
      ->delimiter(','));
  ingest_flags.require(ingest->add_option("--level", ingest_args.level, "Tile matrix level"));
  ingest->add_option("--rows", ingest_args.rows, "Row range N, A:B or A-B (default: whole grid)");
  ingest->add_option("--cols", ingest_args.cols, "Column range N, A:B or A-B (default: whole grid)");
  ingest_flags.require(ingest->add_option("--template", ingest_args.url_template,
                                         "Tile URL template with {layer} {date} {matrix} {row} {col}"));
  ingest_flags.require(ingest->add_option("--store", ingest_args.store, "Store directory (created if missing)"));
  ingest->add_option("--max-parallel", ingest_args.max_parallel, "Concurrent fetches")
      ->capture_default_str()
      ->check(CLI::Range(1u, 256u));
  ingest->add_option("--provider", ingest_args.provider, "Embedding provider")
      ->capture_default_str()
      ->check(CLI::IsMember({"reference", "external"}));
  ingest->add_option("--endpoint", ingest_args.endpoint, "External provider base URL");
  ingest->add_option("--seed", ingest_args.seed, "Reference featurizer seed")->capture_default_str();
  ingest->add_option("--dimension", ingest_args.dimension, "Embedding width")->capture_default_str();
  ingest->add_option("--retries", ingest_args.retries, "Retries per tile after the first attempt")
      ->capture_default_str()
      ->check(CLI::Range(0, 10));
  ingest->add_option("--backoff-ms", ingest_args.backoff_ms, "First retry delay; doubles per retry")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ingest->add_option("--min-interval-ms", ingest_args.min_interval_ms, "Minimum gap between request starts")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ingest->add_option("--timeout-ms", ingest_args.timeout_ms, "Per-request timeout")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  BuildArgs build_args;
  auto* build = app.add_subcommand("build", "Build an index file from a store");
  JsonFlags build_flags;
  add_config(build_flags, build);
  build_flags.require(build->add_option("--store", build_args.store, "Store directory"));
  build_flags.require(build->add_option("--index", build_args.index, "Output index file"));
  build->add_option("--trees", build_args.trees, "Number of trees")->capture_default_str()->check(CLI::Range(1u, 10000u));
  build->add_option("--leaf", build_args.leaf, "Leaf capacity")->capture_default_str()->check(CLI::Range(1u, 1000000u));
  build->add_option("--metric", build_args.metric, "angular or euclidean")
      ->capture_default_str()
      ->check(CLI::IsMember({"angular", "euclidean"}));
  build->add_option("--seed", build_args.seed, "Build seed")->capture_default_str();
  build->add_option("--threads", build_args.threads, "Build threads (0: all cores)")->capture_default_str();

  QueryArgs query_args;
  auto* query = app.add_subcommand("query", "One-shot search printing \"rank distance url\" lines");
  JsonFlags query_flags;
  add_config(query_flags, query);
  query_flags.require(query->add_option("--index", query_args.index, "Index file"));
  query_flags.require(query->add_option("--store", query_args.store, "Store directory"));
  auto* image_opt = query->add_option("--image", query_args.image, "Query image (PNG or JPEG)");
  auto* id_opt = query->add_option("--id", query_args.id, "Query with a stored item's embedding");
  image_opt->excludes(id_opt);
  query->add_option("--k", query_args.k, "Results to return")->capture_default_str()->check(CLI::Range(std::size_t{1}, kMaxK));
  query->add_option("--budget", query_args.budget, "Search budget (minimum candidates)");
  query->add_flag("--json", query_args.json_output, "Print the SearchResponse as JSON");
  query->add_flag("--exclude-self", query_args.exclude_self, "Drop the --id item from the results");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Measure recall@k against exact search and query latency");
  JsonFlags eval_flags;
  add_config(eval_flags, eval);
  eval_flags.require(eval->add_option("--index", eval_args.index, "Index file"));
  eval->add_option("--store", eval_args.store, "Store directory; checked for consistency with the index");
  eval->add_option("--queries", eval_args.queries, "Stored items sampled as queries")->capture_default_str();
  eval->add_option("--k", eval_args.k, "Neighbors per query")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--budget", eval_args.budget, "Search budget (default max(k * trees, 2000))");
  eval->add_option("--seed", eval_args.seed, "Query sampling seed")->capture_default_str();
  eval->add_flag("--json", eval_args.json_output, "Print the report as JSON");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the HTTP search API until SIGINT or SIGTERM (SIGHUP reloads)");
  serve->add_option("--config", serve_args.config, "Service config JSON");
  serve->add_option("--index", serve_args.index, "Index file (overrides config)");
  serve->add_option("--store", serve_args.store, "Store directory (overrides config)");
  serve->add_option("--bind", serve_args.bind, "host:port (overrides config)");
  serve->add_option("--cors-origin", serve_args.cors_origin, "Allowed browser origin (overrides config)");
  serve->add_option("--url-template", serve_args.url_template, "URL template (overrides config)");

  try {
    app.parse(argc, argv);
    for (const JsonFlags* flags : {&ingest_flags, &build_flags, &query_flags, &eval_flags}) {
      if (*flags->sub) apply_config(*flags);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFatal;
  }

  try {
    if (*ingest) return run_ingest(ingest_args, out, err);
    if (*build) return run_build(build_args, out, err);
    if (*query) return run_query(query_args, out, err);
    if (*eval) return run_eval(eval_args, out, err);
    if (*serve) return run_serve(serve_args, out, err);
  } catch (const std::exception& e) {
    return report_error(err, e);
  }
  return kExitFatal;
}

}  // namespace tilesearch
