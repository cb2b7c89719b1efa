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

#include "gatedrag/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <queue>

#include "gatedrag/error.hpp"
#include "json.hpp"
#include "text_util.hpp"

namespace gatedrag {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'G', 'D', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::size_t kHeaderBytes = 20;

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  GATEDRAG_REQUIRE(in.good(), ErrorCode::io, "cannot open {}", path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::format, "{}:{}: {}", path.string(), line_no, e.what());
    }
    GATEDRAG_REQUIRE(j.is_object(), ErrorCode::format,
                     "{}:{}: expected a JSON object", path.string(), line_no);
    try {
      fn(j, line_no);
    } catch (const json::exception& e) {
      fail(ErrorCode::format, "{}:{}: {}", path.string(), line_no, e.what());
    }
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

double norm_of(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

// Strict weak "ranks ahead of" order used by search.
bool ranks_before(const SearchHit& a, const SearchHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

}  // namespace

void ChunkOptions::validate() const {
  GATEDRAG_REQUIRE(size > overlap, ErrorCode::invalid_config,
                   "chunk size ({}) must exceed overlap ({})", size, overlap);
  GATEDRAG_REQUIRE(min_chars <= size, ErrorCode::invalid_config,
                   "minimum chunk length ({}) exceeds chunk size ({})",
                   min_chars, size);
}

std::vector<PassageRecord> chunk_corpus(std::span<const Article> articles,
                                        const ChunkOptions& options,
                                        std::int64_t first_id) {
  options.validate();
  const std::size_t stride = options.size - options.overlap;
  std::vector<PassageRecord> out;
  std::int64_t next_id = first_id;
  for (std::size_t a = 0; a < articles.size(); ++a) {
    const auto& text = articles[a].body;
    const auto offsets = detail::codepoint_offsets(text);
    const std::size_t len = offsets.size() - 1;
    for (std::size_t start = 0; start < len; start += stride) {
      const std::size_t end = std::min(start + options.size, len);
      if (end - start < options.min_chars) break;
      PassageRecord p;
      p.id = next_id++;
      p.title = articles[a].title;
      p.body = text.substr(offsets[start], offsets[end] - offsets[start]);
      p.article = a;
      p.start = start;
      p.end = end;
      out.push_back(std::move(p));
      if (end == len) break;
    }
  }
  return out;
}

std::vector<Article> read_corpus(const std::filesystem::path& path) {
  std::vector<Article> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    out.push_back({j.at("title").get<std::string>(),
                   j.at("body").get<std::string>()});
  });
  return out;
}

std::vector<PassageRecord> read_passages(const std::filesystem::path& path) {
  std::vector<PassageRecord> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    PassageRecord p;
    p.id = j.at("id").get<std::int64_t>();
    p.title = j.at("title").get<std::string>();
    p.body = j.at("body").get<std::string>();
    p.article = j.value("article", std::size_t{0});
    p.start = j.value("start", std::size_t{0});
    p.end = j.value("end", std::size_t{0});
    out.push_back(std::move(p));
  });
  return out;
}

void write_passages(const std::filesystem::path& path,
                    std::span<const PassageRecord> passages) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "cannot write {}",
                   path.string());
  for (const auto& p : passages) {
    json j = {{"id", p.id},           {"title", p.title}, {"body", p.body},
              {"article", p.article}, {"start", p.start}, {"end", p.end}};
    out << j.dump() << '\n';
  }
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "write to {} failed",
                   path.string());
}

PassageStore::PassageStore(std::vector<PassageRecord> passages)
    : passages_(std::move(passages)) {
  by_id_.reserve(passages_.size());
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    const bool inserted = by_id_.emplace(passages_[i].id, i).second;
    GATEDRAG_REQUIRE(inserted, ErrorCode::data_integrity,
                     "duplicate passage id {}", passages_[i].id);
  }
}

const PassageRecord* PassageStore::find(std::int64_t id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const PassageRecord& PassageStore::at(std::int64_t id) const {
  const auto* p = find(id);
  GATEDRAG_REQUIRE(p != nullptr, ErrorCode::data_integrity,
                   "passage id {} is not in the passage store", id);
  return *p;
}

std::vector<double> normalize(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) {
    GATEDRAG_REQUIRE(std::isfinite(x), ErrorCode::invalid_input,
                     "vector contains a non-finite value");
    s += x * x;
  }
  const double n = std::sqrt(s);
  GATEDRAG_REQUIRE(n > 0.0, ErrorCode::invalid_input,
                   "cannot normalize a zero vector");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

std::vector<float> normalize(std::span<const float> v) {
  for (float x : v) {
    GATEDRAG_REQUIRE(std::isfinite(x), ErrorCode::invalid_input,
                     "vector contains a non-finite value");
  }
  const double n = norm_of(v);
  GATEDRAG_REQUIRE(n > 0.0, ErrorCode::invalid_input,
                   "cannot normalize a zero vector");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
  }
  return out;
}

double inner_product(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return s;
}

EmbeddingIndex::EmbeddingIndex(std::size_t dim) : dim_(dim) {
  GATEDRAG_REQUIRE(dim >= 1, ErrorCode::invalid_input,
                   "index dimension must be >= 1");
}

void EmbeddingIndex::reserve(std::size_t n) {
  data_.reserve(n * dim_);
  ids_.reserve(n);
  id_set_.reserve(n);
}

void EmbeddingIndex::add(std::int64_t id, std::span<const float> v) {
  GATEDRAG_REQUIRE(v.size() == dim_, ErrorCode::invalid_input,
                   "vector has dimension {}, index expects {}", v.size(),
                   dim_);
  for (float x : v) {
    GATEDRAG_REQUIRE(std::isfinite(x), ErrorCode::invalid_input,
                     "vector for id {} contains a non-finite value", id);
  }
  const double n = norm_of(v);
  GATEDRAG_REQUIRE(std::abs(n - 1.0) <= kNormTolerance,
                   ErrorCode::invalid_input,
                   "vector for id {} has norm {}, expected unit norm", id, n);
  GATEDRAG_REQUIRE(id_set_.insert(id).second, ErrorCode::invalid_input,
                   "duplicate id {} in index", id);
  data_.insert(data_.end(), v.begin(), v.end());
  ids_.push_back(id);
}

std::span<const float> EmbeddingIndex::row(std::size_t i) const {
  return std::span<const float>(data_).subspan(i * dim_, dim_);
}

std::vector<SearchHit> EmbeddingIndex::search(std::span<const float> query,
                                              std::size_t k) const {
  GATEDRAG_REQUIRE(query.size() == dim_, ErrorCode::invalid_input,
                   "query has dimension {}, index expects {}", query.size(),
                   dim_);
  GATEDRAG_REQUIRE(k >= 1, ErrorCode::invalid_input, "top-K must be >= 1");
  for (float x : query) {
    GATEDRAG_REQUIRE(std::isfinite(x), ErrorCode::invalid_input,
                     "query contains a non-finite value");
  }

  // Bounded heap whose top is the weakest retained hit.
  std::priority_queue<SearchHit, std::vector<SearchHit>,
                      decltype(&ranks_before)>
      heap(&ranks_before);
  const std::size_t keep = std::min(k, size());
  for (std::size_t i = 0; i < size(); ++i) {
    SearchHit hit{ids_[i], inner_product(row(i), query)};
    if (heap.size() < keep) {
      heap.push(hit);
    } else if (ranks_before(hit, heap.top())) {
      heap.pop();
      heap.push(hit);
    }
  }
  std::vector<SearchHit> out(heap.size());
  for (auto it = out.rbegin(); it != out.rend(); ++it) {
    *it = heap.top();
    heap.pop();
  }
  return out;
}

void EmbeddingIndex::save(const std::filesystem::path& path) const {
  std::string buf;
  buf.reserve(kHeaderBytes + data_.size() * 4 + ids_.size() * 8);
  buf.append(kMagic, 4);
  put_u32(buf, kIndexVersion);
  put_u32(buf, static_cast<std::uint32_t>(dim_));
  put_u64(buf, ids_.size());
  for (float x : data_) put_u32(buf, std::bit_cast<std::uint32_t>(x));
  for (auto id : ids_) put_u64(buf, static_cast<std::uint64_t>(id));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "cannot write index {}",
                   path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  GATEDRAG_REQUIRE(out.good(), ErrorCode::io, "write to {} failed",
                   path.string());
}

EmbeddingIndex EmbeddingIndex::load(const std::filesystem::path& path,
                                    std::optional<std::size_t> expected_dim) {
  std::ifstream in(path, std::ios::binary);
  GATEDRAG_REQUIRE(in.good(), ErrorCode::io, "cannot open index {}",
                   path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  const auto name = path.string();
  GATEDRAG_REQUIRE(buf.size() >= kHeaderBytes, ErrorCode::format,
                   "{}: truncated header", name);
  GATEDRAG_REQUIRE(std::memcmp(buf.data(), kMagic, 4) == 0, ErrorCode::format,
                   "{}: bad magic bytes", name);
  const auto version = get_u32(buf.data() + 4);
  GATEDRAG_REQUIRE(version == kIndexVersion, ErrorCode::format,
                   "{}: unsupported index version {}", name, version);
  const std::size_t dim = get_u32(buf.data() + 8);
  const std::uint64_t n = get_u64(buf.data() + 12);
  GATEDRAG_REQUIRE(dim >= 1, ErrorCode::format, "{}: dimension is 0", name);
  if (expected_dim) {
    GATEDRAG_REQUIRE(dim == *expected_dim, ErrorCode::format,
                     "{}: dimension {} does not match expected {}", name, dim,
                     *expected_dim);
  }
  // Guard the size arithmetic against absurd headers.
  GATEDRAG_REQUIRE(n <= buf.size() / 8 && (n == 0 || dim <= buf.size() / 4 / n),
                   ErrorCode::format, "{}: row count {} exceeds file size",
                   name, n);
  const std::size_t expected = kHeaderBytes + n * dim * 4 + n * 8;
  GATEDRAG_REQUIRE(buf.size() == expected, ErrorCode::format,
                   "{}: size {} bytes, header implies {}", name, buf.size(),
                   expected);

  EmbeddingIndex index(dim);
  index.reserve(n);
  const unsigned char* vec = buf.data() + kHeaderBytes;
  const unsigned char* idp = vec + n * dim * 4;
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      row[d] = std::bit_cast<float>(get_u32(vec + (i * dim + d) * 4));
    }
    const auto id = static_cast<std::int64_t>(get_u64(idp + i * 8));
    try {
      index.add(id, row);
    } catch (const Error& e) {
      fail(ErrorCode::format, "{}: row {}: {}", name, i, e.what());
    }
  }
  return index;
}

ContextBlock format_context(std::span<const SearchHit> hits,
                            const PassageStore& passages, std::size_t budget) {
  ContextBlock block;
  std::size_t remaining = budget;
  for (const auto& hit : hits) {
    const auto& p = passages.at(hit.id);
    if (block.truncated) continue;  // keep validating ids
    const std::string formatted = "[" + p.title + "] " + p.body;
    const auto tokens = detail::whitespace_tokens(formatted);
    if (remaining == 0 && !tokens.empty()) {
      block.truncated = true;
      continue;
    }
    const std::size_t take = std::min(tokens.size(), remaining);
    if (take == 0) continue;
    if (!block.text.empty()) block.text.push_back('\n');
    for (std::size_t i = 0; i < take; ++i) {
      if (i > 0) block.text.push_back(' ');
      block.text.append(tokens[i]);
    }
    block.token_count += take;
    remaining -= take;
    if (take < tokens.size()) block.truncated = true;
  }
  return block;
}

}  // namespace gatedrag
