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

#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tilesearch/ann_forest.hpp"
#include "tilesearch/mock_tile_server.hpp"
#include "tilesearch/query_service.hpp"

namespace tilesearch {
namespace {

using nlohmann::json;
using testing::TempDir;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "tilesearch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> ingest_args(const MockTileServer& server, const std::filesystem::path& store,
                                     const std::string& rows = "0:1", const std::string& cols = "0:1") {
  return {"ingest",   "--layer", "MODIS_Terra_CorrectedReflectance_TrueColor",
          "--dates",  "2020-01-01", "--level", "2", "--rows", rows, "--cols", cols,
          "--template", server.url_template(), "--store", store.string(), "--backoff-ms", "1"};
}

TEST(CliTest, HelpAndVersion) {
  EXPECT_EQ(run({"--help"}).code, kExitOk);
  const auto v = run({"--version"});
  EXPECT_EQ(v.code, kExitOk);
  EXPECT_NE(v.out.find("0.1.0"), std::string::npos);
  EXPECT_EQ(run({}).code, kExitFatal);
  EXPECT_EQ(run({"frobnicate"}).code, kExitFatal);
  EXPECT_EQ(run({"build", "--store", "x"}).code, kExitFatal);
}

TEST(CliTest, IngestCountsAndSkips) {
  MockTileServer server(MockTileServerConfig{});
  TempDir dir;
  const auto first = run(ingest_args(server, dir / "store"));
  ASSERT_EQ(first.code, kExitOk) << first.err;
  const auto report = json::parse(first.out);
  EXPECT_EQ(report["fetched"], 4);
  EXPECT_EQ(report["failed"], 0);

  const auto second = run(ingest_args(server, dir / "store"));
  ASSERT_EQ(second.code, kExitOk) << second.err;
  EXPECT_EQ(json::parse(second.out)["skipped_duplicates"], 4);
  EXPECT_EQ(json::parse(second.out)["fetched"], 0);
  EXPECT_EQ(EmbeddingStore::open(dir / "store").count(), 4u);
}

TEST(CliTest, IngestPartialFailureExitCode) {
  MockTileServerConfig config;
  config.failures.push_back({1, 1, 500, std::nullopt, std::nullopt});
  MockTileServer server(config);
  TempDir dir;
  const auto r = run(ingest_args(server, dir / "store"));
  EXPECT_EQ(r.code, kExitPartial) << r.err;
  const auto report = json::parse(r.out);
  EXPECT_EQ(report["fetched"], 3);
  EXPECT_EQ(report["failed"], 1);
  EXPECT_EQ(report["failures"].size(), 1u);
}

TEST(CliTest, IngestFatalErrors) {
  MockTileServer server(MockTileServerConfig{});
  TempDir dir;
  std::ofstream(dir / "file") << "x";
  EXPECT_EQ(run(ingest_args(server, dir / "file" / "store")).code, kExitFatal);
  const auto outside = run(ingest_args(server, dir / "store", "0:9"));
  EXPECT_EQ(outside.code, kExitFatal);
  EXPECT_NE(outside.err.find("error: "), std::string::npos);
}

TEST(CliTest, ConfigFileWithFlagOverride) {
  MockTileServer server(MockTileServerConfig{});
  TempDir dir;
  json cfg{{"layer", "MODIS_Terra_CorrectedReflectance_TrueColor"},
           {"dates", {"2020-01-01", "2020-01-02"}},
           {"level", 2},
           {"rows", "0"},
           {"cols", "0:2"},
           {"template", server.url_template()},
           {"store", (dir / "store").string()},
           {"backoff_ms", 1}};
  std::ofstream(dir / "ingest.json") << cfg.dump();
  const auto r = run({"ingest", "--config", (dir / "ingest.json").string(), "--cols", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(json::parse(r.out)["fetched"], 2);
}

class CliIndexTest : public ::testing::Test {
 protected:
  void SetUp() override {
    items_ = testing::gaussian_matrix(1000, 128, 17);
    testing::make_store(dir_ / "store", items_);
    const auto r = run({"build", "--store", store(), "--index", index(), "--trees", "10"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  std::string store() const { return (dir_ / "store").string(); }
  std::string index() const { return (dir_ / "index.tsf").string(); }

  TempDir dir_;
  EmbeddingMatrix items_;
};

TEST_F(CliIndexTest, BuildIsDeterministic) {
  const std::string again = (dir_ / "again.tsf").string();
  const auto r = run({"build", "--store", store(), "--index", again, "--trees", "10", "--threads", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("items 1000"), std::string::npos);
  EXPECT_NE(r.out.find("trees 10"), std::string::npos);
  EXPECT_EQ(read_file(index()), read_file(again));
}

TEST_F(CliIndexTest, QueryById) {
  const auto r = run({"query", "--index", index(), "--store", store(), "--id", "5", "--k", "3"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream lines(r.out);
  int rank = 0;
  double distance = -1;
  std::string url;
  lines >> rank >> distance >> url;
  EXPECT_EQ(rank, 1);
  EXPECT_EQ(distance, 0.0);
  const auto store = EmbeddingStore::open(dir_ / "store");
  EXPECT_EQ(url, store.resolve_url(5));

  const auto excl = run({"query", "--index", index(), "--store", this->store(), "--id", "5", "--exclude-self", "--json"});
  ASSERT_EQ(excl.code, kExitOk) << excl.err;
  const auto resp = SearchResponse::from_json(json::parse(excl.out));
  EXPECT_EQ(resp.results.size(), 20u);
  for (const auto& res : resp.results) EXPECT_NE(res.item_id, 5u);
}

TEST_F(CliIndexTest, QueryArgumentErrors) {
  EXPECT_EQ(run({"query", "--index", index(), "--store", store()}).code, kExitFatal);
  EXPECT_EQ(run({"query", "--index", index(), "--store", store(), "--id", "1", "--image", "x.png"}).code, kExitFatal);
  EXPECT_EQ(run({"query", "--index", index(), "--store", store(), "--id", "1000"}).code, kExitFatal);
  EXPECT_EQ(run({"query", "--index", index(), "--store", store(), "--id", "1", "--k", "0"}).code, kExitFatal);
  std::ofstream(dir_ / "junk.png") << "not an image";
  const auto bad = run({"query", "--index", index(), "--store", store(), "--image", (dir_ / "junk.png").string()});
  EXPECT_EQ(bad.code, kExitFatal);
  EXPECT_NE(bad.err.find("invalid-image"), std::string::npos);
}

TEST_F(CliIndexTest, QueryMatchesService) {
  auto forest = std::make_shared<const AnnForest>(AnnForest::load(index()));
  auto store = std::make_shared<const EmbeddingStore>(EmbeddingStore::open(dir_ / "store"));
  QueryService service(forest, store, make_featurizer(ProviderDescriptor{}, ProviderOptions{}));
  for (const ItemId id : {0, 123, 999}) {
    const auto r = run({"query", "--index", index(), "--store", this->store(), "--id", std::to_string(id), "--k", "10", "--json"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    SearchRequest req;
    req.embedding = testing::row_vector(items_, id);
    req.k = 10;
    EXPECT_EQ(SearchResponse::from_json(json::parse(r.out)).results, service.search(req).results);
  }
}

TEST_F(CliIndexTest, EvalWithFullBudgetIsExact) {
  const auto r = run({"eval", "--index", index(), "--store", store(), "--queries", "20", "--budget", "1000", "--json"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["queries"], 20);
  EXPECT_EQ(j["index_items"], 1000);
  EXPECT_DOUBLE_EQ(j["mean_recall"].get<double>(), 1.0);
  EXPECT_GE(j["p95_ms"].get<double>(), j["p50_ms"].get<double>());
}

TEST(CliTest, EmptyStoreBuildsEmptyIndex) {
  TempDir dir;
  EmbeddingStore::create(dir / "store", 128, testing::kTestTemplate);
  const auto r = run({"build", "--store", (dir / "store").string(), "--index", (dir / "i.tsf").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.err.find("empty"), std::string::npos);
  EXPECT_EQ(AnnForest::load(dir / "i.tsf").size(), 0u);
}

TEST(CliTest, ServeRejectsInvalidConfig) {
  TempDir dir;
  std::ofstream(dir / "svc.json") << R"({"index": 5})";
  const auto r = run({"serve", "--config", (dir / "svc.json").string()});
  EXPECT_EQ(r.code, kExitFatal);
  EXPECT_NE(r.err.find("'index'"), std::string::npos);
}

TEST_F(CliIndexTest, ServeProcessAnswersAndStopsOnSigint) {
  int pipe_fds[2];
  ASSERT_EQ(pipe(pipe_fds), 0);
  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    dup2(pipe_fds[1], STDOUT_FILENO);
    close(pipe_fds[0]);
    close(pipe_fds[1]);
    execl(TILESEARCH_CLI_PATH, "tilesearch", "serve", "--index", index().c_str(), "--store", store().c_str(),
          "--bind", "127.0.0.1:0", static_cast<char*>(nullptr));
    _exit(127);
  }
  close(pipe_fds[1]);
  FILE* child_out = fdopen(pipe_fds[0], "r");
  char line[256] = {};
  ASSERT_NE(fgets(line, sizeof line, child_out), nullptr);
  const std::string listening(line);
  const std::string prefix = "listening on http://127.0.0.1:";
  ASSERT_EQ(listening.rfind(prefix, 0), 0u) << listening;
  const int port = std::stoi(listening.substr(prefix.size()));

  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["index_items"], 1000);

  kill(pid, SIGINT);
  int status = 0;
  ASSERT_EQ(waitpid(pid, &status, 0), pid);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  fclose(child_out);
}

}  // namespace
}  // namespace tilesearch
