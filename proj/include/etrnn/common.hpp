// Copyright 2026 The ETRNN Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace etrnn {

// Error taxonomy. The CLI maps these onto exit codes 1, 2 and 3.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Timestamp = std::chrono::sys_seconds;
using CalendarDate = std::chrono::sys_days;

inline constexpr double kSecondsPerDay = 86400.0;

/// Parses "YYYY-MM-DD". Throws DataError on malformed input.
CalendarDate parse_date(std::string_view text);

/// Accepts "YYYY-MM-DD[T ]HH:MM:SS[Z]" or an integer count of epoch seconds.
Timestamp parse_timestamp(std::string_view text);

std::string format_date(CalendarDate date);
std::string format_timestamp(Timestamp ts);

/// Adds whole calendar months, clamping the day to the end of the month.
CalendarDate add_months(CalendarDate date, int months);

// 64-bit FNV-1a. Used for config hashes, data fingerprints and split checksums,
// which must be stable across runs and platforms.
class Fnv1a {
 public:
  void update(std::string_view bytes) noexcept {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update_u64(std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
      state_ ^= static_cast<unsigned char>(v >> (8 * i));
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

/// Derives an independent stream seed from a base seed and a tag sequence.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace etrnn
