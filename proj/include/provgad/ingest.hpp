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

#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "provgad/hash.hpp"

namespace provgad {

// One audit record: an interaction from a source entity to a destination entity.
struct RawEvent {
  std::string src_uid;
  LabelId src_label;
  std::string dst_uid;
  LabelId dst_label;
  LabelId edge_label;
  std::string batch_id;

  friend bool operator==(const RawEvent&, const RawEvent&) = default;
};

enum class LogFormat { kStreamSpot, kJsonl };

LogFormat parse_log_format(std::string_view name);
std::string_view to_string(LogFormat format);

// src-id \t src-type \t dst-id \t dst-type \t edge-type \t graph-id
RawEvent parse_streamspot_line(std::string_view line, std::size_t line_no = 1);

// {"src":{"uid","attrs"},"dst":{"uid","attrs"},"edge":{"attrs"},"batch"}
RawEvent parse_jsonl_record(std::string_view text, std::size_t line_no = 1);

RawEvent parse_record(LogFormat format, std::string_view text, std::size_t line_no);

// Parses every non-empty line in file order. With threads > 1 the lines are
// parsed in contiguous chunks and reassembled in input order.
std::vector<RawEvent> parse_lines(const std::vector<std::string>& lines, LogFormat format,
                                  unsigned threads = 1);
std::vector<RawEvent> parse_stream(std::istream& in, LogFormat format, unsigned threads = 1);
std::vector<RawEvent> parse_file(const std::string& path, LogFormat format,
                                 unsigned threads = 1);

struct EventBatch {
  std::string batch_id;
  std::vector<RawEvent> events;
};

// Groups events by batch id, ordered by first appearance; events keep file order.
std::vector<EventBatch> group_by_batch(std::vector<RawEvent> events);

std::vector<std::string> split_fields(std::string_view line, char sep);

}  // namespace provgad
