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
#include "tilesearch/embedding_store.hpp"

#include <fstream>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tilesearch/error.hpp"

namespace tilesearch {
namespace {

using testing::gaussian_matrix;
using testing::grid_key;
using testing::kTestTemplate;
using testing::row_vector;
using testing::TempDir;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

void append_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  out << bytes;
}

TEST(EmbeddingStoreTest, InsertAndReopen) {
  TempDir dir;
  const auto items = gaussian_matrix(3, 128, 1);
  {
    auto store = EmbeddingStore::create(dir / "s", 128, kTestTemplate);
    EXPECT_EQ(store.count(), 0u);
    EXPECT_EQ(store.insert(grid_key(0), items.row(0)), 0u);
    EXPECT_EQ(store.insert(grid_key(1), items.row(1)), 1u);
    EXPECT_EQ(store.insert(grid_key(2), items.row(2)), 2u);
  }
  const auto store = EmbeddingStore::open(dir / "s");
  ASSERT_EQ(store.count(), 3u);
  EXPECT_EQ(store.dimension(), 128u);
  EXPECT_EQ(store.record(1).key, grid_key(1));
  EXPECT_EQ(store.record(1).item_id, 1u);
  EXPECT_EQ(row_vector(store.embeddings(), 2), row_vector(items, 2));
  EXPECT_EQ(store.find(grid_key(2)), std::optional<ItemId>(2));
  EXPECT_FALSE(store.contains(grid_key(3)));
  EXPECT_EQ(store.manifest().url_template, kTestTemplate);
  EXPECT_FALSE(store.manifest().created_at.empty());
}

TEST(EmbeddingStoreTest, EmbeddingsFileIsExactlyNTimes128Floats) {
  TempDir dir;
  const auto store = testing::make_store(dir / "s", gaussian_matrix(257, 128, 2));
  EXPECT_EQ(std::filesystem::file_size(dir / "s" / "embeddings.f32"), 257u * 128u * 4u);
}

TEST(EmbeddingStoreTest, StoredBytesAreLittleEndianFloat32) {
  TempDir dir;
  auto store = EmbeddingStore::create(dir / "s", 2, kTestTemplate);
  store.insert(grid_key(0), std::vector<float>{1.0f, -2.0f});
  std::ifstream in(dir / "s" / "embeddings.f32", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(bytes, std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8));
}

TEST(EmbeddingStoreTest, RejectsDuplicatesAndBadEmbeddings) {
  TempDir dir;
  auto store = EmbeddingStore::create(dir / "s", 4, kTestTemplate);
  store.insert(grid_key(0), std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(code_of([&] { store.insert(grid_key(0), std::vector<float>{1, 2, 3, 4}); }),
            ErrorCode::kDuplicateRecord);
  EXPECT_EQ(code_of([&] { store.insert(grid_key(1), std::vector<float>{1, 2, 3}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { store.insert(grid_key(1), std::vector<float>{1, 2, NAN, 4}); }),
            ErrorCode::kInvalidArgument);
  TileKey bad = grid_key(1);
  bad.layer = "no/slash";
  EXPECT_EQ(code_of([&] { store.insert(bad, std::vector<float>{1, 2, 3, 4}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(store.count(), 1u);
}

TEST(EmbeddingStoreTest, BatchIsAllOrNothing) {
  TempDir dir;
  auto store = EmbeddingStore::create(dir / "s", 2, kTestTemplate);
  store.insert(grid_key(0), std::vector<float>{1, 0});
  const std::vector<PendingTile> batch{{grid_key(1), {0, 1}}, {grid_key(0), {1, 1}}};
  EXPECT_EQ(code_of([&] { store.insert_batch(batch); }), ErrorCode::kDuplicateRecord);
  const std::vector<PendingTile> twice{{grid_key(2), {0, 1}}, {grid_key(2), {1, 1}}};
  EXPECT_EQ(code_of([&] { store.insert_batch(twice); }), ErrorCode::kDuplicateRecord);
  EXPECT_EQ(store.count(), 1u);
  const std::vector<PendingTile> good{{grid_key(1), {0, 1}}, {grid_key(2), {1, 1}}};
  EXPECT_EQ(store.insert_batch(good), (std::vector<ItemId>{1, 2}));
  EXPECT_EQ(EmbeddingStore::open(dir / "s").count(), 3u);
}

TEST(EmbeddingStoreTest, InterruptedAppendIsDiscarded) {
  TempDir dir;
  const auto items = gaussian_matrix(5, 8, 3);
  { testing::make_store(dir / "s", items); }
  const auto emb = dir / "s" / "embeddings.f32";
  const auto rec = dir / "s" / "records.jsonl";
  const auto emb_size = std::filesystem::file_size(emb);
  const auto rec_size = std::filesystem::file_size(rec);
  // A writer died after appending data but before rewriting the manifest.
  append_bytes(emb, std::string(8 * 4 + 3, '\x7f'));
  append_bytes(rec, "{\"item_id\":5,\"layer\":\"L\",\"da");

  const auto reader = EmbeddingStore::open(dir / "s");
  EXPECT_EQ(reader.count(), 5u);

  auto writer = EmbeddingStore::open(dir / "s", EmbeddingStore::Mode::kReadWrite);
  EXPECT_EQ(writer.count(), 5u);
  EXPECT_EQ(std::filesystem::file_size(emb), emb_size);
  EXPECT_EQ(std::filesystem::file_size(rec), rec_size);
  EXPECT_EQ(writer.insert(grid_key(5), items.row(0)), 5u);
  EXPECT_EQ(row_vector(EmbeddingStore::open(dir / "s").embeddings(), 5), row_vector(items, 0));
}

TEST(EmbeddingStoreTest, ShortDataFilesAreReported) {
  TempDir dir;
  { testing::make_store(dir / "s", gaussian_matrix(5, 8, 4)); }
  std::filesystem::resize_file(dir / "s" / "embeddings.f32", 4 * 8 * 4);
  EXPECT_EQ(code_of([&] { EmbeddingStore::open(dir / "s"); }), ErrorCode::kIo);
}

TEST(EmbeddingStoreTest, SingleWriter) {
  TempDir dir;
  auto writer = EmbeddingStore::create(dir / "s", 4, kTestTemplate);
  EXPECT_EQ(code_of([&] { EmbeddingStore::open(dir / "s", EmbeddingStore::Mode::kReadWrite); }),
            ErrorCode::kIo);
  EXPECT_NO_THROW(EmbeddingStore::open(dir / "s"));
  auto reader = EmbeddingStore::open(dir / "s");
  EXPECT_EQ(code_of([&] { reader.insert(grid_key(0), std::vector<float>{1, 2, 3, 4}); }), ErrorCode::kIo);
}

TEST(EmbeddingStoreTest, CreateAndOpenErrors) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { EmbeddingStore::open(dir / "none"); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { EmbeddingStore::create(dir / "s", 0, kTestTemplate); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { EmbeddingStore::create(dir / "s", 4, "https://h/{layer}"); }), ErrorCode::kInvalidConfig);
  { EmbeddingStore::create(dir / "s", 4, kTestTemplate); }
  EXPECT_EQ(code_of([&] { EmbeddingStore::create(dir / "s", 4, kTestTemplate); }), ErrorCode::kInvalidArgument);
  EXPECT_FALSE(EmbeddingStore::exists(dir / "none"));
  EXPECT_TRUE(EmbeddingStore::exists(dir / "s"));
}

TEST(EmbeddingStoreTest, LookupsOutOfRange) {
  TempDir dir;
  const auto store = testing::make_store(dir / "s", gaussian_matrix(1, 4, 5));
  EXPECT_EQ(code_of([&] { store.record(1); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { store.embedding(1); }), ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { store.resolve_url(1); }), ErrorCode::kNotFound);
}

TEST(EmbeddingStoreTest, ResolveUrl) {
  TempDir dir;
  auto store = EmbeddingStore::create(dir / "s", 2, kTestTemplate);
  const TileKey key{"MODIS_Terra_CorrectedReflectance_TrueColor", TileDate::parse("2020-01-01"), 4, 3, 7};
  const ItemId id = store.insert(key, std::vector<float>{1, 0});
  EXPECT_EQ(store.resolve_url(id),
            "https://tiles.test/wmts/MODIS_Terra_CorrectedReflectance_TrueColor/default/2020-01-01/250m/4/3/7.jpg");
  EXPECT_EQ(store.resolve_url(id), resolve_url(store.record(id), store.manifest()));
}

TEST(EmbeddingStoreTest, FeaturizerProvenancePersists) {
  TempDir dir;
  {
    auto store = EmbeddingStore::create(dir / "s", 4, kTestTemplate);
    EXPECT_TRUE(store.manifest().featurizer.is_null());
    store.set_featurizer({{"kind", "reference"}, {"seed", 7}});
  }
  const auto store = EmbeddingStore::open(dir / "s");
  EXPECT_EQ(store.manifest().featurizer["seed"], 7);
}

TEST(EmbeddingStoreTest, ExportMatchesInsertOrder) {
  TempDir dir;
  const auto items = gaussian_matrix(50, 16, 6);
  const auto store = testing::make_store(dir / "s", items);
  const auto exported = store.export_embeddings();
  ASSERT_EQ(exported.rows(), 50u);
  EXPECT_TRUE(std::equal(exported.values().begin(), exported.values().end(), items.values().begin()));
}

TEST(EmbeddingStoreTest, ManifestIsTheCommitPoint) {
  TempDir dir;
  { testing::make_store(dir / "s", gaussian_matrix(3, 4, 7)); }
  std::ifstream in(dir / "s" / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  EXPECT_EQ(manifest["count"], 3);
  EXPECT_EQ(manifest["dimension"], 4);
  EXPECT_EQ(manifest["format"], "tilesearch-store");
  EXPECT_FALSE(std::filesystem::exists(dir / "s" / "manifest.json.tmp"));
}

}  // namespace
}  // namespace tilesearch
