// Copyright 2026 The crag Authors
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

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crag/error.hpp"
#include "crag/utf8.hpp"

namespace crag {

inline constexpr std::size_t kChunkLenLong = 500;
inline constexpr std::size_t kChunkLenShort = 250;

struct Document {
  std::string doc_id;
  std::string title;
  std::string body;
};

/// A window of a document body. `char_offset` and the chunk length are counted
/// in Unicode scalar values, so a chunk never splits a multi-byte character.
struct Chunk {
  std::size_t chunk_id = 0;
  std::string doc_id;
  std::size_t char_offset = 0;
  std::string text;

  bool operator==(const Chunk&) const = default;
};

struct Glossary {
  std::map<std::string, std::string> abbreviations;
  std::map<std::string, std::string> terms;

  bool empty() const { return abbreviations.empty() && terms.empty(); }
  bool operator==(const Glossary&) const = default;
};

struct GlossaryDiagnostics {
  std::size_t entries = 0;
  std::size_t malformed = 0;
  // "<source>:<line>" of the first few malformed lines.
  std::vector<std::string> samples;

  void reject(const std::string& where) {
    ++malformed;
    if (samples.size() < 16) samples.push_back(where);
  }
};

/// Splits `doc.body` into consecutive non-overlapping windows of `chunk_len`
/// scalar values; only the last window may be shorter. chunk_id is left at 0,
/// `chunk_corpus` assigns the dense ids.
inline std::vector<Chunk> chunk_document(const Document& doc, std::size_t chunk_len) {
  CRAG_REQUIRE(chunk_len >= 1, "chunk_len must be >= 1");
  std::vector<Chunk> out;
  if (doc.body.empty()) return out;
  const auto bounds = utf8::boundaries(doc.body);
  const std::size_t n_chars = bounds.size() - 1;
  for (std::size_t start = 0; start < n_chars; start += chunk_len) {
    const std::size_t end = std::min(start + chunk_len, n_chars);
    Chunk c;
    c.doc_id = doc.doc_id;
    c.char_offset = start;
    c.text = doc.body.substr(bounds[start], bounds[end] - bounds[start]);
    out.push_back(std::move(c));
  }
  return out;
}

inline void validate_corpus(const std::vector<Document>& docs) {
  std::set<std::string_view> seen;
  for (const auto& d : docs) {
    if (d.doc_id.empty()) throw PreconditionError("document with empty doc_id");
    if (!seen.insert(d.doc_id).second) throw PreconditionError("duplicate doc_id '" + d.doc_id + "'");
  }
}

/// Chunks every document and assigns dense chunk ids in document order, then
/// offset order.
inline std::vector<Chunk> chunk_corpus(const std::vector<Document>& docs, std::size_t chunk_len) {
  validate_corpus(docs);
  std::vector<Chunk> all;
  for (const auto& d : docs) {
    auto part = chunk_document(d, chunk_len);
    for (auto& c : part) {
      c.chunk_id = all.size();
      all.push_back(std::move(c));
    }
  }
  return all;
}

namespace detail {

enum class Section { kNone, kTerms, kAbbreviations };

inline std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string_view::npos) nl = s.size();
    auto line = s.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == s.size()) break;
    pos = nl + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

// Strips a leading markdown "#" run or clause number ("3.2 ") from a heading.
inline std::string_view heading_text(std::string_view line, bool& numbered) {
  numbered = false;
  line = text::trim(line);
  if (!line.empty() && line.front() == '#') {
    numbered = true;
    while (!line.empty() && line.front() == '#') line.remove_prefix(1);
    return text::trim(line);
  }
  std::size_t i = 0;
  while (i < line.size() && ((line[i] >= '0' && line[i] <= '9') || line[i] == '.')) ++i;
  if (i > 0 && i < line.size() && (line[i] == ' ' || line[i] == '\t') && line[0] != '.') {
    numbered = true;
    return text::trim(line.substr(i));
  }
  return line;
}

inline Section classify_heading(std::string_view line, bool& is_heading) {
  bool numbered = false;
  const auto h = text::ascii_lower(heading_text(line, numbered));
  if (h == "definitions" || h == "terms and definitions" || h == "definitions of terms") {
    is_heading = true;
    return Section::kTerms;
  }
  if (h == "abbreviations" || h == "acronyms") {
    is_heading = true;
    return Section::kAbbreviations;
  }
  // Any other numbered or '#' heading closes the current section.
  is_heading = numbered && line.find(':') == std::string_view::npos &&
               line.find('\t') == std::string_view::npos;
  return Section::kNone;
}

inline bool split_entry(std::string_view line, std::string& key, std::string& value) {
  auto sep = line.find('\t');
  if (sep == std::string_view::npos) sep = line.find(':');
  if (sep == std::string_view::npos) return false;
  const auto k = text::trim(line.substr(0, sep));
  const auto v = text::trim(line.substr(sep + 1));
  if (k.empty() || v.empty()) return false;
  key.assign(k);
  value.assign(v);
  return true;
}

inline bool valid_abbreviation_key(std::string_view key) {
  return std::any_of(key.begin(), key.end(),
                     [](char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); });
}

}  // namespace detail

/// Scans every document for "Definitions" / "Abbreviations" sections (headings
/// matched case-insensitively, optionally numbered or '#'-prefixed) and parses
/// "KEY: value" or "KEY<TAB>value" lines. A later document overrides an earlier
/// one on key collision. Malformed lines are counted, never fatal.
inline Glossary extract_glossary(const std::vector<Document>& docs, GlossaryDiagnostics* diag = nullptr) {
  Glossary g;
  GlossaryDiagnostics local;
  GlossaryDiagnostics& dg = diag ? *diag : local;
  for (const auto& doc : docs) {
    detail::Section section = detail::Section::kNone;
    const auto lines = detail::split_lines(doc.body);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      const auto line = lines[ln];
      if (text::trim(line).empty()) continue;
      bool is_heading = false;
      const auto next = detail::classify_heading(line, is_heading);
      if (is_heading) {
        section = next;
        continue;
      }
      if (section == detail::Section::kNone) continue;
      std::string key, value;
      const std::string where = doc.doc_id + ":" + std::to_string(ln + 1);
      if (!detail::split_entry(line, key, value)) {
        dg.reject(where);
        continue;
      }
      if (section == detail::Section::kAbbreviations) {
        if (!detail::valid_abbreviation_key(key)) {
          dg.reject(where);
          continue;
        }
        g.abbreviations[key] = value;
      } else {
        g.terms[key] = value;
      }
      ++dg.entries;
    }
  }
  return g;
}

enum class GlossaryKind { kAbbreviations, kTerms };

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw ConfigError("file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

}  // namespace detail

/// Reads one UTF-8 TSV glossary file ("key<TAB>value" per line) into `g`.
/// Duplicate keys: the last line wins.
inline void load_glossary_file(const std::filesystem::path& path, GlossaryKind kind, Glossary& g,
                               GlossaryDiagnostics* diag = nullptr) {
  const std::string content = detail::read_file(path);
  utf8::require_valid(content, path.string());
  GlossaryDiagnostics local;
  GlossaryDiagnostics& dg = diag ? *diag : local;
  auto& target = kind == GlossaryKind::kAbbreviations ? g.abbreviations : g.terms;
  const auto lines = detail::split_lines(content);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(ln + 1);
    const auto tab = lines[ln].find('\t');
    if (tab == std::string_view::npos) {
      dg.reject(where);
      continue;
    }
    const auto k = text::trim(lines[ln].substr(0, tab));
    const auto v = text::trim(lines[ln].substr(tab + 1));
    if (k.empty() || v.empty() ||
        (kind == GlossaryKind::kAbbreviations && !detail::valid_abbreviation_key(k))) {
      dg.reject(where);
      continue;
    }
    target[std::string(k)] = std::string(v);
    ++dg.entries;
  }
}

inline Glossary load_glossary_files(const std::filesystem::path& abbrev_path,
                                    const std::filesystem::path& terms_path,
                                    GlossaryDiagnostics* diag = nullptr) {
  Glossary g;
  load_glossary_file(abbrev_path, GlossaryKind::kAbbreviations, g, diag);
  load_glossary_file(terms_path, GlossaryKind::kTerms, g, diag);
  return g;
}

/// Later glossary entries override earlier ones.
inline void merge_into(Glossary& base, const Glossary& overlay) {
  for (const auto& [k, v] : overlay.abbreviations) base.abbreviations[k] = v;
  for (const auto& [k, v] : overlay.terms) base.terms[k] = v;
}

/// Loads a corpus from either a directory of UTF-8 text files (file stem is the
/// doc_id, files taken in lexicographic order) or a JSON-lines file with
/// {"doc_id","title","body"} objects.
inline std::vector<Document> load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  std::vector<Document> docs;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Document d;
      d.doc_id = f.stem().string();
      d.title = d.doc_id;
      d.body = detail::read_file(f);
      utf8::require_valid(d.body, f.string());
      docs.push_back(std::move(d));
    }
  } else if (fs::is_regular_file(path, ec)) {
    const std::string content = detail::read_file(path);
    utf8::require_valid(content, path.string());
    const auto lines = detail::split_lines(content);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (text::trim(lines[ln]).empty()) continue;
      const std::string where = path.string() + ":" + std::to_string(ln + 1);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(lines[ln]);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(where + ": " + e.what());
      }
      if (!j.is_object() || !j.contains("doc_id") || !j["doc_id"].is_string() ||
          !j.contains("body") || !j["body"].is_string()) {
        throw ParseError(where + ": expected object with string fields doc_id and body");
      }
      Document d;
      d.doc_id = j["doc_id"].get<std::string>();
      d.title = j.value("title", std::string{});
      d.body = j["body"].get<std::string>();
      docs.push_back(std::move(d));
    }
  } else {
    throw ConfigError("corpus path not found: " + path.string());
  }
  validate_corpus(docs);
  return docs;
}

}  // namespace crag
