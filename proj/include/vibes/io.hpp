#pragma once

// File formats: line-delimited JSON registries and traces, and feature-cache
// directories (meta.json plus little-endian binary matrices).

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vibes/core_model.hpp"
#include "vibes/error.hpp"

namespace vibes {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

namespace detail {

/// Calls fn(line_number, json) for each non-blank line.
template <typename Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json value;
    try {
      value = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!value.is_object())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected a JSON object");
    fn(line_no, value);
  }
}

struct FieldReader {
  const json& object;
  std::string where;

  [[nodiscard]] const json& at(const char* key) const {
    const auto it = object.find(key);
    if (it == object.end()) throw DataError(where + ": missing field '" + key + "'");
    return *it;
  }
  [[nodiscard]] std::string str(const char* key) const {
    const auto& v = at(key);
    if (!v.is_string()) throw DataError(where + ": field '" + key + "' must be a string");
    return v.get<std::string>();
  }
  [[nodiscard]] std::int64_t integer(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number_integer()) throw DataError(where + ": field '" + key + "' must be an integer");
    return v.get<std::int64_t>();
  }
  [[nodiscard]] double real(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number()) throw DataError(where + ": field '" + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw DataError(where + ": field '" + key + "' must be finite");
    return x;
  }
};

inline std::string location(const fs::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

template <typename T>
std::vector<T> read_le_array(const fs::path& path, std::size_t expected_count, const char* what) {
  static_assert(sizeof(T) == 4);
  const std::string bytes = read_text_file(path);
  if (bytes.size() != expected_count * 4) {
    throw DataError("dimension mismatch: '" + path.string() + "' holds " + std::to_string(bytes.size()) +
                    " bytes, metadata implies " + std::to_string(expected_count * 4) + " " + what);
  }
  std::vector<T> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + 4 * i);
    const std::uint32_t word = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
                               (std::uint32_t{p[3]} << 24);
    out[i] = std::bit_cast<T>(word);
  }
  return out;
}

template <typename T>
std::string to_le_bytes(const std::vector<T>& values) {
  static_assert(sizeof(T) == 4);
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto word = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((word >> (8 * b)) & 0xffu);
  }
  return bytes;
}

}  // namespace detail

// ---------------------------------------------------------------- registry

inline Registry load_registry(const fs::path& path) {
  std::vector<BackboneRecord> records;
  std::set<std::string> seen;
  detail::for_each_json_line(path, [&](std::size_t line_no, const json& j) {
    const detail::FieldReader r{j, detail::location(path, line_no)};
    BackboneRecord b;
    b.id = r.str("id");
    b.param_count = r.integer("param_count");
    b.pretrain_dataset = r.str("pretrain_dataset");
    b.pretrain_dataset_size = r.integer("pretrain_dataset_size");
    b.feature_dim = r.integer("feature_dim");
    b.source = j.contains("source") ? r.str("source") : std::string{};
    if (b.id.empty()) throw DataError(r.where + ": empty id");
    if (b.param_count < 1) throw DataError(r.where + ": param_count must be >= 1");
    if (b.feature_dim < 1) throw DataError(r.where + ": feature_dim must be >= 1");
    if (b.pretrain_dataset_size < 0) throw DataError(r.where + ": pretrain_dataset_size must be >= 0");
    if (!seen.insert(b.id).second) throw DataError(r.where + ": duplicate backbone id '" + b.id + "'");
    records.push_back(std::move(b));
  });
  if (records.empty()) throw DataError("empty registry");
  return Registry(std::move(records));
}

inline std::string format_registry(const Registry& registry) {
  std::string out;
  for (const auto& b : registry.backbones()) {
    const json j{{"id", b.id},
                 {"param_count", b.param_count},
                 {"pretrain_dataset", b.pretrain_dataset},
                 {"pretrain_dataset_size", b.pretrain_dataset_size},
                 {"feature_dim", b.feature_dim},
                 {"source", b.source}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void write_registry(const fs::path& path, const Registry& registry) {
  write_file_atomic(path, format_registry(registry));
}

// ------------------------------------------------------------------- trace

/// Checks trace invariants; a null registry skips the id check.
inline void validate_trace(const EvalTrace& trace, const Registry* registry) {
  std::set<std::pair<std::string, Evaluator>> seen;
  for (const auto& e : trace.entries) {
    const std::string who = "trace entry (" + e.backbone_id + ", " + std::string(to_string(e.evaluator)) + ")";
    if (!(e.tau_seconds > 0.0) || !std::isfinite(e.tau_seconds))
      throw DataError(who + ": tau_seconds must be positive");
    if (!(e.val_metric >= 0.0 && e.val_metric <= 1.0)) throw DataError(who + ": val_metric out of [0,1]");
    if (!(e.test_metric >= 0.0 && e.test_metric <= 1.0)) throw DataError(who + ": test_metric out of [0,1]");
    if (registry != nullptr && registry->find(e.backbone_id) == nullptr)
      throw DataError(who + ": unknown backbone_id '" + e.backbone_id + "'");
    if (!seen.emplace(e.backbone_id, e.evaluator).second) throw DataError(who + ": duplicate entry");
  }
}

/// Loads a trace; when a registry is given, every backbone id must be in it.
inline EvalTrace load_trace(const fs::path& path, const Registry* registry) {
  EvalTrace trace;
  std::set<std::pair<std::string, Evaluator>> seen;
  detail::for_each_json_line(path, [&](std::size_t line_no, const json& j) {
    const detail::FieldReader r{j, detail::location(path, line_no)};
    TraceEntry e;
    e.backbone_id = r.str("backbone_id");
    const auto name = r.str("evaluator");
    const auto ev = parse_evaluator(name);
    if (!ev) throw DataError(r.where + ": unknown evaluator '" + name + "'");
    e.evaluator = *ev;
    e.tau_seconds = r.real("tau_seconds");
    e.val_metric = r.real("val_metric");
    e.test_metric = r.real("test_metric");
    try {
      validate_trace(EvalTrace{{e}}, registry);
    } catch (const DataError& err) {
      throw DataError(r.where + ": " + err.what());
    }
    if (!seen.emplace(e.backbone_id, e.evaluator).second)
      throw DataError(r.where + ": duplicate entry for (" + e.backbone_id + ", " + name + ")");
    trace.entries.push_back(std::move(e));
  });
  return trace;
}

inline EvalTrace load_trace(const fs::path& path, const Registry& registry) { return load_trace(path, &registry); }

inline std::string format_trace_entry(const TraceEntry& e) {
  const json j{{"backbone_id", e.backbone_id},
               {"evaluator", std::string(to_string(e.evaluator))},
               {"tau_seconds", e.tau_seconds},
               {"val_metric", e.val_metric},
               {"test_metric", e.test_metric}};
  return j.dump();
}

inline std::string format_trace(const EvalTrace& trace) {
  std::string out;
  for (const auto& e : trace.entries) {
    out += format_trace_entry(e);
    out += '\n';
  }
  return out;
}

inline void write_trace(const fs::path& path, const EvalTrace& trace) {
  write_file_atomic(path, format_trace(trace));
}

// ----------------------------------------------------------- feature cache

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

/// Throws DataError when a cache breaks dims, label range or class coverage.
inline void validate_feature_cache(const FeatureCache& cache) {
  const std::string who = "feature cache '" + cache.backbone_id + "'";
  if (cache.feature_dim < 1) throw DataError(who + ": feature_dim must be >= 1");
  if (cache.class_count < 1) throw DataError(who + ": class_count must be >= 1");
  const std::array<const Split*, 3> splits{&cache.train, &cache.val, &cache.test};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const Split& split = *splits[s];
    if (split.features.size() != split.rows() * static_cast<std::size_t>(cache.feature_dim))
      throw DataError(who + ": dimension mismatch in split " + kSplitNames[s]);
    for (const auto label : split.labels)
      if (label < 0 || label >= cache.class_count)
        throw DataError(who + ": label " + std::to_string(label) + " out of range [0, " +
                        std::to_string(cache.class_count - 1) + "] in split " + kSplitNames[s]);
    for (const float x : split.features)
      if (!std::isfinite(x)) throw DataError(who + ": non-finite feature in split " + kSplitNames[s]);
  }
  std::vector<bool> present(static_cast<std::size_t>(cache.class_count), false);
  for (const auto label : cache.train.labels) present[static_cast<std::size_t>(label)] = true;
  for (std::size_t c = 0; c < present.size(); ++c)
    if (!present[c]) throw DataError(who + ": class " + std::to_string(c) + " absent from train");
}

inline FeatureCache load_feature_cache(const fs::path& dir, const Registry* registry) {
  const fs::path meta_path = dir / "meta.json";
  json meta;
  try {
    meta = json::parse(read_text_file(meta_path));
  } catch (const json::parse_error& e) {
    throw DataError(meta_path.string() + ": malformed JSON: " + e.what());
  }
  if (!meta.is_object()) throw DataError(meta_path.string() + ": expected a JSON object");
  const detail::FieldReader r{meta, meta_path.string()};

  FeatureCache cache;
  cache.backbone_id = r.str("backbone_id");
  cache.feature_dim = r.integer("feature_dim");
  const auto classes = r.integer("class_count");
  if (cache.feature_dim < 1) throw DataError(r.where + ": feature_dim must be >= 1");
  if (classes < 1 || classes > INT32_MAX) throw DataError(r.where + ": class_count must be >= 1");
  cache.class_count = static_cast<std::int32_t>(classes);
  for (const char* key : {"download_seconds", "extraction_seconds"})
    if (meta.contains(key)) cache.extraction_seconds += r.real(key);

  if (registry != nullptr) {
    const auto* record = registry->find(cache.backbone_id);
    if (record == nullptr) throw DataError(r.where + ": unknown backbone_id '" + cache.backbone_id + "'");
    if (record->feature_dim != cache.feature_dim)
      throw DataError(r.where + ": dimension mismatch: cache feature_dim " + std::to_string(cache.feature_dim) +
                      " vs registry " + std::to_string(record->feature_dim));
  }

  const json& sizes = r.at("splits");
  if (!sizes.is_object()) throw DataError(r.where + ": 'splits' must be an object");
  const detail::FieldReader sr{sizes, r.where + " splits"};
  const std::array<Split*, 3> targets{&cache.train, &cache.val, &cache.test};
  for (std::size_t s = 0; s < targets.size(); ++s) {
    const auto rows = sr.integer(kSplitNames[s]);
    if (rows < 0) throw DataError(r.where + ": negative row count for split " + kSplitNames[s]);
    const auto n = static_cast<std::size_t>(rows);
    const std::string name = kSplitNames[s];
    targets[s]->features = detail::read_le_array<float>(dir / (name + ".features.bin"), n * cache.feature_dim,
                                                        "(rows x feature_dim x 4)");
    targets[s]->labels = detail::read_le_array<std::int32_t>(dir / (name + ".labels.bin"), n, "(rows x 4)");
  }
  validate_feature_cache(cache);
  return cache;
}

inline FeatureCache load_feature_cache(const fs::path& dir, const Registry& registry) {
  return load_feature_cache(dir, &registry);
}

inline void write_feature_cache(const fs::path& dir, const FeatureCache& cache) {
  validate_feature_cache(cache);
  fs::create_directories(dir);
  json meta{{"backbone_id", cache.backbone_id},
            {"feature_dim", cache.feature_dim},
            {"class_count", cache.class_count},
            {"splits", {{"train", cache.train.rows()}, {"val", cache.val.rows()}, {"test", cache.test.rows()}}}};
  if (cache.extraction_seconds > 0.0) meta["extraction_seconds"] = cache.extraction_seconds;
  const std::array<const Split*, 3> splits{&cache.train, &cache.val, &cache.test};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const std::string name = kSplitNames[s];
    write_file_atomic(dir / (name + ".features.bin"), detail::to_le_bytes(splits[s]->features));
    write_file_atomic(dir / (name + ".labels.bin"), detail::to_le_bytes(splits[s]->labels));
  }
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

}  // namespace vibes
