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

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "tilesearch/error.hpp"

namespace tilesearch {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "embeddings.f32 is read and written as native little-endian floats");

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kEmbeddingsFile = "embeddings.f32";
constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kLockFile = "store.lock";
constexpr const char* kFormatName = "tilesearch-store";
constexpr int kFormatVersion = 1;

Error io_error(const std::string& what, const fs::path& path) {
  return Error(ErrorCode::kIo, what + " " + path.string() + ": " + std::strerror(errno));
}

/// Owned POSIX descriptor.
class FileHandle {
 public:
  FileHandle() = default;
  FileHandle(const fs::path& path, int flags) : fd_(::open(path.c_str(), flags | O_CLOEXEC, 0644)) {
    if (fd_ < 0) throw io_error("cannot open", path);
  }
  FileHandle(FileHandle&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  FileHandle& operator=(FileHandle&& other) noexcept {
    std::swap(fd_, other.fd_);
    return *this;
  }
  ~FileHandle() {
    if (fd_ >= 0) ::close(fd_);
  }

  int get() const noexcept { return fd_; }

  void write_all(std::string_view bytes, const fs::path& path) const {
    while (!bytes.empty()) {
      const ssize_t n = ::write(fd_, bytes.data(), bytes.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw io_error("write failed on", path);
      }
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  std::uint64_t size() const {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw Error(ErrorCode::kIo, "fstat failed");
    return static_cast<std::uint64_t>(st.st_size);
  }

  void truncate(std::uint64_t size, const fs::path& path) const {
    if (::ftruncate(fd_, static_cast<off_t>(size)) != 0) throw io_error("cannot truncate", path);
  }

 private:
  int fd_ = -1;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_now_iso() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json record_to_json(const TileRecord& r) {
  return json{{"item_id", r.item_id},         {"layer", r.key.layer},
              {"date", r.key.date.to_string()}, {"tile_matrix", r.key.tile_matrix},
              {"row", r.key.row},               {"col", r.key.col}};
}

TileRecord record_from_json(const json& j) {
  TileRecord r;
  r.item_id = j.at("item_id").get<ItemId>();
  r.key.layer = j.at("layer").get<std::string>();
  r.key.date = TileDate::parse(j.at("date").get<std::string>());
  r.key.tile_matrix = j.at("tile_matrix").get<std::uint32_t>();
  r.key.row = j.at("row").get<std::uint32_t>();
  r.key.col = j.at("col").get<std::uint32_t>();
  return r;
}

StoreManifest manifest_from_json(const json& j, const fs::path& path) {
  try {
    if (j.at("format").get<std::string>() != kFormatName || j.at("version").get<int>() != kFormatVersion) {
      throw Error(ErrorCode::kIo, "unsupported store format in " + path.string());
    }
    StoreManifest m;
    m.dimension = j.at("dimension").get<std::size_t>();
    m.count = j.at("count").get<std::uint64_t>();
    m.url_template = j.at("url_template").get<std::string>();
    m.created_at = j.value("created_at", "");
    m.featurizer = j.value("featurizer", json());
    if (m.dimension == 0) throw Error(ErrorCode::kIo, "store dimension is zero in " + path.string());
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, "malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace

struct EmbeddingStore::Files {
  FileHandle lock;
  FileHandle embeddings;
  FileHandle records;
};

std::string resolve_url(const TileRecord& record, const StoreManifest& manifest) {
  return UrlTemplate(manifest.url_template).resolve(record.key);
}

EmbeddingStore::EmbeddingStore(EmbeddingStore&&) noexcept = default;
EmbeddingStore& EmbeddingStore::operator=(EmbeddingStore&&) noexcept = default;
EmbeddingStore::~EmbeddingStore() = default;

bool EmbeddingStore::exists(const fs::path& dir) { return fs::exists(dir / kManifestFile); }

EmbeddingStore EmbeddingStore::create(const fs::path& dir, std::size_t dimension,
                                      const std::string& url_template) {
  if (dimension == 0) throw Error(ErrorCode::kInvalidArgument, "store dimension must be positive");
  (void)UrlTemplate(url_template);
  if (exists(dir)) {
    throw Error(ErrorCode::kInvalidArgument, "a store already exists at " + dir.string());
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create store directory " + dir.string() + ": " + ec.message());

  StoreManifest m;
  m.dimension = dimension;
  m.url_template = url_template;
  m.created_at = utc_now_iso();
  // Empty data files first, manifest last.
  FileHandle(dir / kEmbeddingsFile, O_WRONLY | O_CREAT | O_TRUNC);
  FileHandle(dir / kRecordsFile, O_WRONLY | O_CREAT | O_TRUNC);
  EmbeddingStore tmp;
  tmp.dir_ = dir;
  tmp.write_manifest(m);
  return open(dir, Mode::kReadWrite);
}

EmbeddingStore EmbeddingStore::open(const fs::path& dir, Mode mode) {
  EmbeddingStore store;
  store.dir_ = dir;
  if (!exists(dir)) throw Error(ErrorCode::kNotFound, "no store at " + dir.string());

  if (mode == Mode::kReadWrite) {
    store.files_ = std::make_unique<Files>();
    store.files_->lock = FileHandle(dir / kLockFile, O_RDWR | O_CREAT);
    if (::flock(store.files_->lock.get(), LOCK_EX | LOCK_NB) != 0) {
      throw Error(ErrorCode::kIo, "store " + dir.string() + " is locked by another writer");
    }
  }

  json mj;
  try {
    mj = json::parse(read_file(dir / kManifestFile));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, "malformed manifest in " + dir.string() + ": " + e.what());
  }
  store.manifest_ = manifest_from_json(mj, dir / kManifestFile);
  const std::uint64_t count = store.manifest_.count;
  const std::size_t dim = store.manifest_.dimension;

  // Embeddings: exactly `count` rows are committed.
  const std::string raw = read_file(dir / kEmbeddingsFile);
  const std::uint64_t committed_bytes = count * dim * sizeof(float);
  if (raw.size() < committed_bytes) {
    throw Error(ErrorCode::kIo, "embeddings.f32 is shorter than the manifest count in " + dir.string());
  }
  std::vector<float> values(count * dim);
  std::memcpy(values.data(), raw.data(), committed_bytes);
  store.embeddings_ = EmbeddingMatrix(dim, std::move(values));

  // Records: the first `count` newline-terminated lines are committed.
  const std::string text = read_file(dir / kRecordsFile);
  std::size_t pos = 0;
  store.records_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      throw Error(ErrorCode::kIo, "records.jsonl has fewer lines than the manifest count in " + dir.string());
    }
    TileRecord rec;
    try {
      rec = record_from_json(json::parse(std::string_view(text).substr(pos, nl - pos)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kIo, "malformed record on line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (rec.item_id != i) {
      throw Error(ErrorCode::kIo, "record on line " + std::to_string(i + 1) + " has item_id " +
                                      std::to_string(rec.item_id));
    }
    if (!store.by_key_.emplace(rec.key, i).second) {
      throw Error(ErrorCode::kIo, "duplicate record key on line " + std::to_string(i + 1));
    }
    store.records_.push_back(std::move(rec));
    pos = nl + 1;
  }

  if (mode == Mode::kReadWrite) {
    // Drop the tail of any interrupted insert.
    store.files_->embeddings = FileHandle(dir / kEmbeddingsFile, O_WRONLY | O_APPEND);
    store.files_->records = FileHandle(dir / kRecordsFile, O_WRONLY | O_APPEND);
    if (store.files_->embeddings.size() != committed_bytes) {
      store.files_->embeddings.truncate(committed_bytes, dir / kEmbeddingsFile);
    }
    if (store.files_->records.size() != pos) {
      store.files_->records.truncate(pos, dir / kRecordsFile);
    }
  }
  return store;
}

void EmbeddingStore::check_writable() const {
  if (!files_) throw Error(ErrorCode::kIo, "store " + dir_.string() + " was opened read-only");
}

void EmbeddingStore::validate_new(const TileKey& key, std::span<const float> embedding) const {
  validate_layer(key.layer);
  if (embedding.size() != manifest_.dimension) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding has dimension " + std::to_string(embedding.size()) + ", store expects " +
                    std::to_string(manifest_.dimension));
  }
  for (float x : embedding) {
    if (!std::isfinite(x)) throw Error(ErrorCode::kInvalidArgument, "embedding contains a non-finite value");
  }
  if (by_key_.contains(key)) {
    throw Error(ErrorCode::kDuplicateRecord,
                "tile " + key.layer + " " + key.date.to_string() + " " + std::to_string(key.tile_matrix) +
                    "/" + std::to_string(key.row) + "/" + std::to_string(key.col) + " is already stored");
  }
}

ItemId EmbeddingStore::insert(const TileKey& key, std::span<const float> embedding) {
  PendingTile tile{key, std::vector<float>(embedding.begin(), embedding.end())};
  return insert_batch(std::span<const PendingTile>(&tile, 1)).front();
}

std::vector<ItemId> EmbeddingStore::insert_batch(std::span<const PendingTile> tiles) {
  check_writable();
  std::unordered_map<TileKey, std::size_t, TileKeyHash> batch_keys;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    validate_new(tiles[i].key, tiles[i].embedding);
    if (!batch_keys.emplace(tiles[i].key, i).second) {
      throw Error(ErrorCode::kDuplicateRecord, "batch contains the same tile twice");
    }
  }
  commit(tiles);
  std::vector<ItemId> ids(tiles.size());
  for (std::size_t i = 0; i < tiles.size(); ++i) ids[i] = manifest_.count - tiles.size() + i;
  return ids;
}

void EmbeddingStore::commit(std::span<const PendingTile> tiles) {
  if (tiles.empty()) return;
  const std::uint64_t first = manifest_.count;

  std::string emb_bytes;
  std::string rec_bytes;
  std::vector<TileRecord> new_records;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto& e = tiles[i].embedding;
    emb_bytes.append(reinterpret_cast<const char*>(e.data()), e.size() * sizeof(float));
    TileRecord rec{first + i, tiles[i].key};
    rec_bytes += record_to_json(rec).dump();
    rec_bytes += '\n';
    new_records.push_back(std::move(rec));
  }

  StoreManifest next = manifest_;
  next.count = first + tiles.size();
  const std::uint64_t emb_size = first * manifest_.dimension * sizeof(float);
  const std::uint64_t rec_size = files_->records.size();
  try {
    files_->embeddings.write_all(emb_bytes, dir_ / kEmbeddingsFile);
    files_->records.write_all(rec_bytes, dir_ / kRecordsFile);
    write_manifest(next);
  } catch (...) {
    // Manifest not committed: roll the data files back so a retry appends cleanly.
    try {
      files_->embeddings.truncate(emb_size, dir_ / kEmbeddingsFile);
      files_->records.truncate(rec_size, dir_ / kRecordsFile);
    } catch (...) {
    }
    throw;
  }

  manifest_ = std::move(next);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    embeddings_.append(tiles[i].embedding);
    by_key_.emplace(new_records[i].key, new_records[i].item_id);
    records_.push_back(std::move(new_records[i]));
  }
}

void EmbeddingStore::write_manifest(const StoreManifest& m) const {
  json j{{"format", kFormatName},
         {"version", kFormatVersion},
         {"dimension", m.dimension},
         {"count", m.count},
         {"url_template", m.url_template},
         {"created_at", m.created_at}};
  if (!m.featurizer.is_null()) j["featurizer"] = m.featurizer;
  const fs::path tmp = dir_ / "manifest.json.tmp";
  {
    FileHandle out(tmp, O_WRONLY | O_CREAT | O_TRUNC);
    out.write_all(j.dump(2) + "\n", tmp);
  }
  if (::rename(tmp.c_str(), (dir_ / kManifestFile).c_str()) != 0) {
    throw io_error("cannot commit manifest in", dir_);
  }
}

void EmbeddingStore::set_featurizer(const json& info) {
  check_writable();
  StoreManifest next = manifest_;
  next.featurizer = info;
  write_manifest(next);
  manifest_ = std::move(next);
}

const TileRecord& EmbeddingStore::record(ItemId id) const {
  if (id >= records_.size()) {
    throw Error(ErrorCode::kNotFound, "item " + std::to_string(id) + " is not in the store");
  }
  return records_[id];
}

std::span<const float> EmbeddingStore::embedding(ItemId id) const {
  if (id >= embeddings_.rows()) {
    throw Error(ErrorCode::kNotFound, "item " + std::to_string(id) + " is not in the store");
  }
  return embeddings_.row(id);
}

std::optional<ItemId> EmbeddingStore::find(const TileKey& key) const {
  const auto it = by_key_.find(key);
  if (it == by_key_.end()) return std::nullopt;
  return it->second;
}

std::string EmbeddingStore::resolve_url(ItemId id) const {
  return tilesearch::resolve_url(record(id), manifest_);
}

}  // namespace tilesearch
