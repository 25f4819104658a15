/* Copyright 2026 The provgad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "provgad/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "provgad/error.hpp"

namespace provgad {

using nlohmann::json;

LogFormat parse_log_format(std::string_view name) {
  if (name == "streamspot") return LogFormat::kStreamSpot;
  if (name == "jsonl") return LogFormat::kJsonl;
  throw ValidationError("unknown log format '" + std::string(name) +
                        "' (expected streamspot or jsonl)");
}

std::string_view to_string(LogFormat format) {
  return format == LogFormat::kStreamSpot ? "streamspot" : "jsonl";
}

std::vector<std::string> split_fields(std::string_view line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      return fields;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

RawEvent parse_streamspot_line(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto fields = split_fields(line, '\t');
  if (fields.size() != 6) {
    throw ParseError(line_no, fields.size(),
                     "line " + std::to_string(line_no) + ": expected 6 tab-separated fields, got " +
                         std::to_string(fields.size()));
  }
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (fields[i].empty()) {
      throw ParseError(line_no, fields.size(),
                       "line " + std::to_string(line_no) + ": field " + std::to_string(i + 1) +
                           " is empty");
    }
  }
  RawEvent ev;
  ev.src_uid = std::move(fields[0]);
  ev.src_label = hash_label({std::string_view(fields[1])});
  ev.dst_uid = std::move(fields[2]);
  ev.dst_label = hash_label({std::string_view(fields[3])});
  ev.edge_label = hash_label({std::string_view(fields[4])});
  ev.batch_id = std::move(fields[5]);
  return ev;
}

namespace {

std::string where(std::size_t line_no) { return "record " + std::to_string(line_no) + ": "; }

const json& require(const json& obj, const char* key, const std::string& path,
                    std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where(line_no) + "missing key '" + path + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& path,
                           std::size_t line_no) {
  const json& v = require(obj, key, path, line_no);
  if (!v.is_string() || v.get_ref<const std::string&>().empty()) {
    throw SchemaError(where(line_no) + "key '" + path + key + "' must be a non-empty string");
  }
  return v.get<std::string>();
}

LabelId attrs_label(const json& element, const std::string& path, std::size_t line_no) {
  if (!element.is_object()) throw SchemaError(where(line_no) + "'" + path + "' must be an object");
  const json& attrs = require(element, "attrs", path + ".", line_no);
  if (!attrs.is_array() || attrs.empty()) {
    throw SchemaError(where(line_no) + "key '" + path + ".attrs' must be a non-empty array");
  }
  std::vector<std::string> values;
  values.reserve(attrs.size());
  for (const auto& a : attrs) {
    if (!a.is_string()) {
      throw SchemaError(where(line_no) + "key '" + path + ".attrs' must contain only strings");
    }
    values.push_back(a.get<std::string>());
  }
  return hash_label(values);
}

}  // namespace

RawEvent parse_jsonl_record(std::string_view text, std::size_t line_no) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(where(line_no) + "invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw SchemaError(where(line_no) + "record must be a JSON object");
  const json& src = require(doc, "src", "", line_no);
  const json& dst = require(doc, "dst", "", line_no);
  const json& edge = require(doc, "edge", "", line_no);
  RawEvent ev;
  ev.src_label = attrs_label(src, "src", line_no);
  ev.src_uid = require_string(src, "uid", "src.", line_no);
  ev.dst_label = attrs_label(dst, "dst", line_no);
  ev.dst_uid = require_string(dst, "uid", "dst.", line_no);
  ev.edge_label = attrs_label(edge, "edge", line_no);
  ev.batch_id = require_string(doc, "batch", "", line_no);
  return ev;
}

RawEvent parse_record(LogFormat format, std::string_view text, std::size_t line_no) {
  return format == LogFormat::kStreamSpot ? parse_streamspot_line(text, line_no)
                                          : parse_jsonl_record(text, line_no);
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\r'; });
}

void parse_range(const std::vector<std::string>& lines, std::size_t begin, std::size_t end,
                 LogFormat format, std::vector<RawEvent>& out) {
  for (std::size_t i = begin; i < end; ++i) {
    if (blank(lines[i])) continue;
    out.push_back(parse_record(format, lines[i], i + 1));
  }
}

}  // namespace

std::vector<RawEvent> parse_lines(const std::vector<std::string>& lines, LogFormat format,
                                  unsigned threads) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(lines.size() / 1024 + 1)));
  std::vector<RawEvent> events;
  if (threads == 1) {
    parse_range(lines, 0, lines.size(), format, events);
    return events;
  }
  std::vector<std::vector<RawEvent>> parts(threads);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> workers;
  const std::size_t chunk = (lines.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        parse_range(lines, std::min(lines.size(), t * chunk),
                    std::min(lines.size(), (t + 1) * chunk), format, parts[t]);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (auto& part : parts) {
    events.insert(events.end(), std::make_move_iterator(part.begin()),
                  std::make_move_iterator(part.end()));
  }
  return events;
}

std::vector<RawEvent> parse_stream(std::istream& in, LogFormat format, unsigned threads) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  return parse_lines(lines, format, threads);
}

std::vector<RawEvent> parse_file(const std::string& path, LogFormat format, unsigned threads) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open log file: " + path);
  return parse_stream(in, format, threads);
}

std::vector<EventBatch> group_by_batch(std::vector<RawEvent> events) {
  std::vector<EventBatch> batches;
  std::unordered_map<std::string, std::size_t> slot;
  for (auto& ev : events) {
    auto [it, inserted] = slot.try_emplace(ev.batch_id, batches.size());
    if (inserted) batches.push_back(EventBatch{ev.batch_id, {}});
    batches[it->second].events.push_back(std::move(ev));
  }
  return batches;
}

}  // namespace provgad
