// Copyright 2026 The divcap Authors
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

// File formats: corpus JSON lines, vocabulary JSON, embedding text files,
// prediction JSON lines and the binary checkpoint container.

#pragma once

#include "divcap/common.hpp"
#include "divcap/corpus.hpp"
#include "divcap/metrics.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace divcap {

using json = nlohmann::ordered_json;

namespace io {

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

inline std::string line_error(const std::string& path, std::size_t line, const std::string& what) {
  return path + ":" + std::to_string(line) + ": " + what;
}

/// Parses every nonblank line of a JSON-lines file; `fn(obj, line_no)`.
template <typename Fn>
void for_each_json_line(const std::string& path, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(line_error(path, no, std::string("malformed JSON: ") + e.what()));
    }
    if (!obj.is_object()) throw DataError(line_error(path, no, "expected a JSON object"));
    try {
      fn(obj, no);
    } catch (const json::exception& e) {
      throw DataError(line_error(path, no, e.what()));
    }
  }
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- corpus ---------------------------------------------------------------

/// Writes the videos and captions files. Captions are stored as
/// space-joined tokens with their part-of-speech tags.
inline void save_corpus(const Corpus& corpus, const std::string& videos_path, const std::string& captions_path) {
  auto vout = open_out(videos_path);
  auto cout = open_out(captions_path);
  for (const auto& v : corpus.videos) {
    json vo;
    vo["video_id"] = v.video_id;
    vo["features"] = matrix_to_json(v.features);
    if (!v.planted_concepts.empty()) vo["planted_concepts"] = v.planted_concepts;
    vout << vo.dump() << '\n';
    json co;
    co["video_id"] = v.video_id;
    json caps = json::array(), tags = json::array();
    bool any_tags = false;
    for (const auto& c : v.captions) {
      caps.push_back(join_tokens(c.tokens));
      json t = json::array();
      for (auto p : c.tags) t.push_back(std::string(to_string(p)));
      any_tags = any_tags || !c.tags.empty();
      tags.push_back(std::move(t));
    }
    co["captions"] = std::move(caps);
    if (any_tags) co["pos_tags"] = std::move(tags);
    cout << co.dump() << '\n';
  }
  if (!vout || !cout) throw DataError("failed writing corpus files");
}

/// Reads a videos file; captions stay empty.
inline Corpus load_videos(const std::string& videos_path) {
  Corpus corpus;
  std::map<std::string, std::size_t> index;
  Eigen::Index d_f = -1;
  for_each_json_line(videos_path, [&](const json& o, std::size_t no) {
    if (!o.contains("video_id") || !o["video_id"].is_string())
      throw DataError(line_error(videos_path, no, "missing video_id"));
    if (!o.contains("features") || !o["features"].is_array() || o["features"].empty())
      throw DataError(line_error(videos_path, no, "missing feature rows"));
    VideoRecord v;
    v.video_id = o["video_id"].get<std::string>();
    const auto& rows = o["features"];
    const auto n = static_cast<Eigen::Index>(rows.size());
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || row.empty())
        throw DataError(line_error(videos_path, no, "feature row " + std::to_string(r) + " is missing or empty"));
      if (d_f < 0) d_f = static_cast<Eigen::Index>(row.size());
      if (static_cast<Eigen::Index>(row.size()) != d_f)
        throw DataError(line_error(videos_path, no, "feature row " + std::to_string(r) + " has dimension " +
                                                        std::to_string(row.size()) + ", expected " +
                                                        std::to_string(d_f)));
      if (r == 0) v.features.resize(n, d_f);
      for (Eigen::Index c = 0; c < d_f; ++c) {
        const auto& x = row[static_cast<std::size_t>(c)];
        if (!x.is_number()) throw DataError(line_error(videos_path, no, "non-numeric feature value"));
        v.features(r, c) = x.get<double>();
      }
    }
    if (o.contains("planted_concepts")) v.planted_concepts = o["planted_concepts"].get<std::vector<std::string>>();
    if (!index.emplace(v.video_id, corpus.videos.size()).second)
      throw DataError(line_error(videos_path, no, "duplicate video_id '" + v.video_id + "'"));
    corpus.videos.push_back(std::move(v));
  });
  return corpus;
}

/// Reads both corpus files. Concept labels are left empty; call
/// label_corpus once a vocabulary exists.
inline Corpus load_corpus(const std::string& videos_path, const std::string& captions_path) {
  Corpus corpus = load_videos(videos_path);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.videos.size(); ++i) index[corpus.videos[i].video_id] = i;
  for_each_json_line(captions_path, [&](const json& o, std::size_t no) {
    if (!o.contains("video_id") || !o["video_id"].is_string())
      throw DataError(line_error(captions_path, no, "missing video_id"));
    const auto id = o["video_id"].get<std::string>();
    auto it = index.find(id);
    if (it == index.end()) throw DataError(line_error(captions_path, no, "unknown video_id '" + id + "'"));
    if (!o.contains("captions") || !o["captions"].is_array())
      throw DataError(line_error(captions_path, no, "missing captions"));
    const auto texts = o["captions"].get<std::vector<std::string>>();
    std::vector<std::vector<std::string>> tags;
    if (o.contains("pos_tags")) {
      tags = o["pos_tags"].get<std::vector<std::vector<std::string>>>();
      if (tags.size() != texts.size())
        throw DataError(line_error(captions_path, no, "pos_tags count differs from captions"));
    }
    auto& video = corpus.videos[it->second];
    for (std::size_t i = 0; i < texts.size(); ++i) {
      CaptionRecord c;
      c.tokens = tokenize(texts[i]);
      if (c.tokens.empty()) throw DataError(line_error(captions_path, no, "empty caption"));
      if (!tags.empty()) {
        if (tags[i].size() != c.tokens.size())
          throw DataError(line_error(captions_path, no, "caption " + std::to_string(i) +
                                                            " has a tag count different from its token count"));
        for (const auto& t : tags[i]) c.tags.push_back(parse_pos_tag(t));
      }
      video.captions.push_back(std::move(c));
    }
  });
  return corpus;
}

// --- vocabulary and embeddings --------------------------------------------

inline void save_vocabulary(const ConceptVocabulary& vocab, const std::string& path) {
  json o;
  o["words"] = vocab.words;
  o["frequencies"] = vocab.frequencies;
  open_out(path) << o.dump(1) << '\n';
}

/// Words and frequencies; embeddings must be attached separately.
inline ConceptVocabulary load_vocabulary(const std::string& path) {
  auto in = open_in(path);
  json o;
  try {
    o = json::parse(in);
    ConceptVocabulary v;
    v.words = o.at("words").get<std::vector<std::string>>();
    if (o.contains("frequencies")) v.frequencies = o["frequencies"].get<std::vector<std::int64_t>>();
    if (!v.frequencies.empty() && v.frequencies.size() != v.words.size())
      throw DataError(path + ": frequencies and words differ in length");
    v.rebuild_index();
    return v;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

/// "word v1 ... vD" lines. Every line must carry `dim` values.
inline WordEmbeddings load_embeddings(const std::string& path, Eigen::Index dim, std::uint64_t fallback_seed) {
  WordEmbeddings emb(dim, fallback_seed);
  auto in = open_in(path);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<double> vals;
    double x;
    while (ss >> x) vals.push_back(x);
    if (!ss.eof()) throw DataError(line_error(path, no, "non-numeric embedding value"));
    if (static_cast<Eigen::Index>(vals.size()) != dim)
      throw DataError(line_error(path, no, "expected " + std::to_string(dim) + " values, found " +
                                               std::to_string(vals.size())));
    emb.set(word, Eigen::Map<const RowVector>(vals.data(), dim));
  }
  return emb;
}

// --- predictions ----------------------------------------------------------

inline void save_predictions(const std::vector<PredictionSet>& preds, const std::string& path) {
  auto out = open_out(path);
  for (const auto& p : preds) {
    json o;
    o["video_id"] = p.video_id;
    json caps = json::array();
    for (const auto& c : p.captions) {
      json co;
      co["text"] = join_tokens(c.tokens);
      co["concepts"] = c.concepts;
      co["score"] = c.score;
      caps.push_back(std::move(co));
    }
    o["captions"] = std::move(caps);
    out << o.dump() << '\n';
  }
}

inline std::vector<PredictionSet> load_predictions(const std::string& path) {
  std::vector<PredictionSet> preds;
  for_each_json_line(path, [&](const json& o, std::size_t no) {
    PredictionSet p;
    if (!o.contains("video_id") || !o.contains("captions") || !o["captions"].is_array())
      throw DataError(line_error(path, no, "prediction needs video_id and captions"));
    p.video_id = o["video_id"].get<std::string>();
    for (const auto& c : o["captions"]) {
      PredictedCaption pc;
      pc.tokens = tokenize(c.at("text").get<std::string>());
      if (c.contains("concepts")) pc.concepts = c["concepts"].get<std::vector<std::string>>();
      if (c.contains("score")) pc.score = c["score"].get<double>();
      p.captions.push_back(std::move(pc));
    }
    if (p.captions.empty()) throw DataError(line_error(path, no, "empty prediction set"));
    preds.push_back(std::move(p));
  });
  return preds;
}

// --- checkpoint container -------------------------------------------------

inline constexpr char kCheckpointMagic[9] = "DIVCKPT1";

/// A JSON header plus named float64 arrays.
struct Checkpoint {
  json header = json::object();
  std::vector<std::pair<std::string, Matrix>> arrays;

  void put(const std::string& name, const Matrix& m) { arrays.emplace_back(name, m); }
  const Matrix& get(const std::string& name) const {
    for (const auto& [n, m] : arrays)
      if (n == name) return m;
    throw DataError("checkpoint has no array '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.first == name) return true;
    return false;
  }
};

/// Layout: 8-byte magic, u64 header length, UTF-8 JSON header, then the
/// arrays as little-endian row-major float64 at the offsets (in values)
/// listed under header["arrays"].
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
  json header = ck.header;
  json arrays = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : ck.arrays) {
    arrays.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  header["arrays"] = std::move(arrays);
  const std::string text = header.dump();
  const auto tmp = path + ".tmp";
  {
    auto out = open_out(tmp, true);
    out.write(kCheckpointMagic, 8);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : ck.arrays) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
      out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto in = open_in(path, true);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw DataError("'" + path + "' is not a checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ull << 32)) throw DataError("'" + path + "': corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("'" + path + "': truncated header");
  Checkpoint ck;
  try {
    ck.header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "': bad header: " + e.what());
  }
  const std::streamoff data_start = in.tellg();
  for (const auto& a : ck.header.at("arrays")) {
    const auto rows = a.at("rows").get<Eigen::Index>();
    const auto cols = a.at("cols").get<Eigen::Index>();
    const auto off = a.at("offset").get<std::uint64_t>();
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
    in.seekg(data_start + static_cast<std::streamoff>(off * sizeof(double)));
    in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
    if (!in) throw DataError("'" + path + "': truncated array " + a.at("name").get<std::string>());
    ck.arrays.emplace_back(a.at("name").get<std::string>(), Matrix(rm));
  }
  ck.header.erase("arrays");
  return ck;
}

}  // namespace io
}  // namespace divcap
