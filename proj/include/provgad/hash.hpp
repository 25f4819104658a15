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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace provgad {

// XXH64 with seed 0. Test vectors: "" -> 0xEF46DB3751D8E999,
// "a" -> 0xD24EC4F1A98C6E5B, "abc" -> 0x44BC2CF5AD770999.
std::uint64_t xxh64(std::string_view bytes, std::uint64_t seed = 0);

struct LabelId {
  std::uint64_t value = 0;
  friend auto operator<=>(const LabelId&, const LabelId&) = default;
};

// Sorts attrs, joins them with NUL bytes and hashes the result once, so the
// id does not depend on attribute order. Throws ValidationError on an empty list.
LabelId hash_label(std::span<const std::string> attrs);
LabelId hash_label(std::initializer_list<std::string_view> attrs);

std::string to_hex(std::uint64_t value);

}  // namespace provgad

template <>
struct std::hash<provgad::LabelId> {
  std::size_t operator()(const provgad::LabelId& id) const noexcept {
    return static_cast<std::size_t>(id.value);
  }
};
