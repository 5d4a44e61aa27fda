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
#include "tilesearch/http_api.hpp"

#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tilesearch/error.hpp"

namespace tilesearch {
namespace {

using nlohmann::json;
using testing::gaussian_matrix;
using testing::row_vector;
using testing::TempDir;

constexpr const char* kOrigin = "http://ui.example";

class HttpApiTest : public ::testing::Test {
 protected:
  void start(const EmbeddingMatrix& items, ProviderDescriptor provider = {}) {
    items_ = items;
    auto store = std::make_shared<const EmbeddingStore>(testing::make_store(dir_ / "store", items));
    auto forest = std::make_shared<const AnnForest>(AnnForest::build(items, ForestParams{}));
    ProviderOptions options;
    options.timeout = std::chrono::milliseconds(2000);
    options.retry.base_backoff = std::chrono::milliseconds(1);
    service_ = std::make_unique<QueryService>(forest, store, make_featurizer(provider, options));
    server_ = std::make_unique<HttpApiServer>(*service_, kOrigin);
    const int port = server_->bind("127.0.0.1", 0);
    server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
  }

  httplib::Result post_json(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  TempDir dir_;
  EmbeddingMatrix items_;
  std::unique_ptr<QueryService> service_;
  std::unique_ptr<HttpApiServer> server_;
  std::unique_ptr<httplib::Client> client_;
};

TEST(HttpStatusTest, Mapping) {
  EXPECT_EQ(http_status_for(ErrorCode::kInvalidArgument), 400);
  EXPECT_EQ(http_status_for(ErrorCode::kInvalidImage), 400);
  EXPECT_EQ(http_status_for(ErrorCode::kDegenerateQuery), 400);
  EXPECT_EQ(http_status_for(ErrorCode::kNotFound), 404);
  EXPECT_EQ(http_status_for(ErrorCode::kProviderUnavailable), 503);
  EXPECT_EQ(http_status_for(ErrorCode::kProviderContractViolation), 502);
  EXPECT_EQ(http_status_for(ErrorCode::kCorruptIndex), 500);
  const auto body = error_body(Error(ErrorCode::kInvalidImage, "bad"));
  EXPECT_EQ(body["error"], "invalid-image");
  EXPECT_EQ(body["message"], "bad");
}

TEST_F(HttpApiTest, Health) {
  start(gaussian_matrix(25, 128, 1));
  const auto res = client_->Get("/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j["index_items"], 25);
  EXPECT_EQ(j["store_count"], 25);
  EXPECT_EQ(j["dimension"], 128);
  EXPECT_EQ(j["metric"], "angular");
  EXPECT_EQ(j["provider"], "reference");
  EXPECT_EQ(j["consistent"], true);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), kOrigin);
}

TEST_F(HttpApiTest, EmbeddingSearchFindsStoredItemFirst) {
  start(gaussian_matrix(300, 128, 2));
  for (const ItemId id : {0, 42, 299}) {
    const auto res = post_json("/v1/search", {{"embedding", row_vector(items_, id)}, {"k", 5}});
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto resp = SearchResponse::from_json(json::parse(res->body));
    ASSERT_EQ(resp.results.size(), 5u);
    EXPECT_EQ(resp.results[0].item_id, id);
    EXPECT_EQ(resp.results[0].distance, 0.0);
    EXPECT_FALSE(resp.query_id.empty());
  }
}

TEST_F(HttpApiTest, ExclusionSoundnessOverHttp) {
  start(gaussian_matrix(400, 128, 3));
  PortableRng rng(4);
  for (int t = 0; t < 40; ++t) {
    std::vector<ItemId> selected, excluded;
    for (std::uint64_t i = 0, n = 1 + rng.uniform_below(3); i < n; ++i) selected.push_back(rng.uniform_below(400));
    for (std::uint64_t i = 0, n = rng.uniform_below(25); i < n; ++i) excluded.push_back(rng.uniform_below(400));
    const std::size_t k = 1 + rng.uniform_below(30);
    const auto res = post_json(t % 2 ? "/v1/refine" : "/v1/search",
                               {{"selected_ids", selected}, {"exclude_ids", excluded}, {"k", k}});
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto resp = SearchResponse::from_json(json::parse(res->body));
    EXPECT_EQ(resp.results.size(), k);
    std::set<ItemId> banned(selected.begin(), selected.end());
    banned.insert(excluded.begin(), excluded.end());
    for (const auto& r : resp.results) EXPECT_EQ(banned.count(r.item_id), 0u);
  }
}

TEST_F(HttpApiTest, RefineMatchesSearch) {
  start(gaussian_matrix(200, 128, 5));
  const json body{{"selected_ids", {3, 4}}, {"k", 12}};
  const auto a = SearchResponse::from_json(json::parse(post_json("/v1/search", body)->body));
  const auto b = SearchResponse::from_json(json::parse(post_json("/v1/refine", body)->body));
  EXPECT_EQ(a.results, b.results);
  const auto no_ids = post_json("/v1/refine", {{"embedding", row_vector(items_, 0)}});
  EXPECT_EQ(no_ids->status, 400);
}

TEST_F(HttpApiTest, ImageUploads) {
  EmbeddingMatrix items(128, {});
  for (int i = 0; i < 10; ++i) {
    items.append(ReferenceFeaturizer().embed(testing::solid_tile(static_cast<std::uint8_t>(i * 20), 50, 50)));
  }
  start(items);
  const auto png = encode_png(testing::solid_tile(60, 50, 50));
  const std::string png_bytes(png.begin(), png.end());

  httplib::MultipartFormDataItems form{{"image", png_bytes, "snip.png", "image/png"},
                                       {"k", "2", "", ""},
                                       {"exclude_ids", "[9]", "", ""}};
  const auto multipart = client_->Post("/v1/search", form);
  ASSERT_TRUE(multipart);
  ASSERT_EQ(multipart->status, 200) << multipart->body;
  const auto a = SearchResponse::from_json(json::parse(multipart->body));
  ASSERT_EQ(a.results.size(), 2u);
  EXPECT_EQ(a.results[0].item_id, 3u);
  EXPECT_EQ(a.results[0].distance, 0.0);

  const auto raw = client_->Post("/v1/search?k=1", png_bytes, "image/png");
  ASSERT_TRUE(raw);
  ASSERT_EQ(raw->status, 200) << raw->body;
  EXPECT_EQ(SearchResponse::from_json(json::parse(raw->body)).results[0].item_id, 3u);

  const auto truncated = client_->Post("/v1/search", png_bytes.substr(0, png_bytes.size() / 2), "image/png");
  EXPECT_EQ(truncated->status, 400);
  EXPECT_EQ(json::parse(truncated->body)["error"], "invalid-image");

  httplib::MultipartFormDataItems no_image{{"k", "2", "", ""}};
  EXPECT_EQ(client_->Post("/v1/search", no_image)->status, 400);
}

TEST_F(HttpApiTest, ClientErrors) {
  start(gaussian_matrix(10, 128, 6));
  const auto unknown = post_json("/v1/search", {{"selected_ids", {10}}});
  EXPECT_EQ(unknown->status, 400);
  EXPECT_EQ(json::parse(unknown->body)["error"], "not-found");

  const auto both = post_json("/v1/search", {{"selected_ids", {1}}, {"embedding", row_vector(items_, 0)}});
  EXPECT_EQ(both->status, 400);
  EXPECT_EQ(json::parse(both->body)["error"], "invalid-argument");

  const auto big_k = post_json("/v1/search", {{"selected_ids", {1}}, {"k", 1001}});
  EXPECT_EQ(big_k->status, 400);

  const auto malformed = client_->Post("/v1/search", "{not json", "application/json");
  EXPECT_EQ(malformed->status, 400);
  EXPECT_EQ(json::parse(malformed->body)["error"], "invalid-argument");

  std::vector<float> a = row_vector(items_, 0), b = a;
  for (auto& x : b) x = -x;
  const auto degenerate_items = post_json("/v1/search", {{"embedding", std::vector<float>(128, 0.0f)}});
  EXPECT_EQ(degenerate_items->status, 400);
}

TEST_F(HttpApiTest, DegenerateSelection) {
  EmbeddingMatrix items(4, {});
  items.append(std::vector<float>{1, 2, 3, 4});
  items.append(std::vector<float>{-1, -2, -3, -4});
  items.append(std::vector<float>{1, 0, 0, 0});
  start(items);
  const auto res = post_json("/v1/refine", {{"selected_ids", {0, 1}}});
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["error"], "degenerate-query");
}

TEST_F(HttpApiTest, Tiles) {
  start(gaussian_matrix(10, 128, 7));
  const auto ok = client_->Get("/v1/tiles/3");
  ASSERT_EQ(ok->status, 200);
  const auto j = json::parse(ok->body);
  EXPECT_EQ(j["item_id"], 3);
  EXPECT_EQ(j["row"], 0);
  EXPECT_EQ(j["col"], 3);
  EXPECT_EQ(j["url"], service_->get_tile_meta(3).url);
  const auto missing = client_->Get("/v1/tiles/10");
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(json::parse(missing->body)["error"], "not-found");
  EXPECT_EQ(client_->Get("/v1/tiles/abc")->status, 400);
  const auto route = client_->Get("/v2/nothing");
  EXPECT_EQ(route->status, 404);
  EXPECT_EQ(json::parse(route->body)["error"], "not-found");
}

TEST_F(HttpApiTest, CorsPreflight) {
  start(gaussian_matrix(5, 128, 8));
  httplib::Headers headers{{"Origin", kOrigin}, {"Access-Control-Request-Method", "POST"}};
  const auto res = client_->Options("/v1/search", headers);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), kOrigin);
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Headers").find("Content-Type"), std::string::npos);
  const auto err = post_json("/v1/search", json::object());
  EXPECT_EQ(err->get_header_value("Access-Control-Allow-Origin"), kOrigin);
}

TEST_F(HttpApiTest, ConcurrentRequestsAgree) {
  start(gaussian_matrix(1000, 128, 9));
  const json body{{"embedding", row_vector(items_, 77)}, {"k", 10}};
  const auto want = SearchResponse::from_json(json::parse(post_json("/v1/search", body)->body)).results;
  std::atomic<int> mismatches{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&, port = server_->port()] {
      httplib::Client c("127.0.0.1", port);
      for (int i = 0; i < 10; ++i) {
        const auto res = c.Post("/v1/search", body.dump(), "application/json");
        if (!res || res->status != 200 || SearchResponse::from_json(json::parse(res->body)).results != want) {
          ++mismatches;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST_F(HttpApiTest, UnavailableProviderIs503) {
  ProviderDescriptor provider;
  provider.kind = ProviderKind::kExternal;
  provider.endpoint = testing::unreachable_url();
  start(gaussian_matrix(5, 128, 10), provider);
  const auto png = encode_png(testing::solid_tile(1, 2, 3));
  const auto res = client_->Post("/v1/search", std::string(png.begin(), png.end()), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  EXPECT_EQ(json::parse(res->body)["error"], "provider-unavailable");
  // Stored-selection queries do not need the provider.
  EXPECT_EQ(post_json("/v1/refine", {{"selected_ids", {1}}})->status, 200);
}

TEST_F(HttpApiTest, ContractViolationIs502) {
  testing::LoopbackServer provider_server;
  provider_server.server().Post("/embed", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"dimension", 2048}, {"values", std::vector<double>(2048, 0.1)}}.dump(),
                    "application/json");
  });
  provider_server.start();
  ProviderDescriptor provider;
  provider.kind = ProviderKind::kExternal;
  provider.endpoint = provider_server.base_url();
  start(gaussian_matrix(5, 128, 11), provider);
  const auto png = encode_png(testing::solid_tile(1, 2, 3));
  const auto res = client_->Post("/v1/search", std::string(png.begin(), png.end()), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 502);
  EXPECT_EQ(json::parse(res->body)["error"], "provider-contract-violation");
}

TEST_F(HttpApiTest, BindConflictIsAnIoError) {
  start(gaussian_matrix(5, 128, 12));
  HttpApiServer second(*service_, kOrigin);
  try {
    second.bind("127.0.0.1", server_->port());
    FAIL() << "expected a bind failure";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

}  // namespace
}  // namespace tilesearch
