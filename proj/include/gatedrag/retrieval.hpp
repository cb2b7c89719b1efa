// Copyright 2026 The gatedrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense retrieval stack: corpus chunking, an exact flat inner-product index
// over unit vectors, and budgeted context formatting.
//
// Index file layout (all little-endian):
//
//   offset  size      field
//   0       4         magic "GDIX"
//   4       4         u32 version (1)
//   8       4         u32 dim
//   12      8         u64 n
//   20      4*n*dim   f32 vectors, row-major
//   ...     8*n       i64 ids, aligned with rows
//
// Embedding files produced outside this library use the same layout.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace gatedrag {

struct Article {
  std::string title;
  std::string body;
};

/// Window sizes are counted in Unicode code points.
struct ChunkOptions {
  std::size_t size = 1000;
  std::size_t overlap = 100;
  std::size_t min_chars = 200;

  void validate() const;
};

struct PassageRecord {
  std::int64_t id = 0;
  std::string title;
  std::string body;
  // Source article and [start, end) code-point window; informational.
  std::size_t article = 0;
  std::size_t start = 0;
  std::size_t end = 0;
};

/// Sliding windows of `size` code points with stride size - overlap. A
/// window shorter than `min_chars` is dropped and ends the article. Passage
/// ids are assigned sequentially from `first_id`.
std::vector<PassageRecord> chunk_corpus(std::span<const Article> articles,
                                        const ChunkOptions& options = {},
                                        std::int64_t first_id = 0);

/// JSON Lines, one {"title": ..., "body": ...} object per line.
std::vector<Article> read_corpus(const std::filesystem::path& path);

/// JSON Lines, one {"id", "title", "body"} object per line.
std::vector<PassageRecord> read_passages(const std::filesystem::path& path);
void write_passages(const std::filesystem::path& path,
                    std::span<const PassageRecord> passages);

/// Id-addressable passage collection. Ids must be unique.
class PassageStore {
 public:
  PassageStore() = default;
  explicit PassageStore(std::vector<PassageRecord> passages);

  const PassageRecord* find(std::int64_t id) const;
  /// Throws data_integrity if the id is unknown.
  const PassageRecord& at(std::int64_t id) const;

  std::size_t size() const noexcept { return passages_.size(); }
  const std::vector<PassageRecord>& passages() const noexcept {
    return passages_;
  }

 private:
  std::vector<PassageRecord> passages_;
  std::unordered_map<std::int64_t, std::size_t> by_id_;
};

std::vector<double> normalize(std::span<const double> v);
/// Norm is accumulated in double.
std::vector<float> normalize(std::span<const float> v);

struct SearchHit {
  std::int64_t id = 0;
  double score = 0.0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Exact top-K inner-product index over unit-normalized rows.
///
/// Built by a single writer; once populated, search() is const and may be
/// called concurrently.
class EmbeddingIndex {
 public:
  static constexpr double kNormTolerance = 1e-6;

  explicit EmbeddingIndex(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }

  void reserve(std::size_t n);

  /// Appends a row. Throws invalid_input on dimension mismatch, a norm
  /// farther than kNormTolerance from 1, or a duplicate id.
  void add(std::int64_t id, std::span<const float> unit_vector);

  /// The k rows with the largest inner product, best first; equal scores
  /// are ordered by smaller id. Returns min(k, size()) hits.
  std::vector<SearchHit> search(std::span<const float> query,
                                std::size_t k) const;

  std::span<const float> row(std::size_t i) const;
  std::span<const float> data() const noexcept { return data_; }
  std::span<const std::int64_t> ids() const noexcept { return ids_; }

  void save(const std::filesystem::path& path) const;

  /// Validates header, exact file size, row norms and id uniqueness; throws
  /// format and never returns a partially read index. When `expected_dim`
  /// is given a different stored dim is also a format error.
  static EmbeddingIndex load(const std::filesystem::path& path,
                             std::optional<std::size_t> expected_dim = {});

 private:
  std::size_t dim_;
  std::vector<float> data_;
  std::vector<std::int64_t> ids_;
  std::unordered_set<std::int64_t> id_set_;
};

/// Inner product accumulated in double, in index order.
double inner_product(std::span<const float> a, std::span<const float> b);

struct ContextBlock {
  std::string text;
  std::size_t token_count = 0;
  bool truncated = false;
};

/// Concatenates "[title] body" blocks in hit order, one per line, and stops
/// at `budget` whitespace tokens (cutting mid-passage if needed). Tokens
/// within a block are re-joined with single spaces. Throws data_integrity
/// for an id missing from `passages`.
ContextBlock format_context(std::span<const SearchHit> hits,
                            const PassageStore& passages, std::size_t budget);

}  // namespace gatedrag
