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

#include "etrnn/common.hpp"

#include <charconv>
#include <cstdio>

namespace etrnn {
namespace {

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

CalendarDate parse_date(std::string_view text) {
  using namespace std::chrono;
  int y = 0;
  unsigned m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_int(text.substr(0, 4), y) ||
      !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
    throw DataError("malformed date '" + std::string(text) + "' (expected YYYY-MM-DD)");
  }
  year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return sys_days{ymd};
}

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  std::int64_t epoch = 0;
  if (parse_int(text, epoch)) return Timestamp{seconds{epoch}};
  if (text.size() < 19 || (text[10] != 'T' && text[10] != ' ')) {
    throw DataError("malformed timestamp '" + std::string(text) + "'");
  }
  std::string_view tail = text.substr(19);
  if (!(tail.empty() || tail == "Z")) {
    throw DataError("unsupported timestamp suffix in '" + std::string(text) + "'");
  }
  CalendarDate day_part = parse_date(text.substr(0, 10));
  int hh = 0, mm = 0, ss = 0;
  if (text[13] != ':' || text[16] != ':' || !parse_int(text.substr(11, 2), hh) ||
      !parse_int(text.substr(14, 2), mm) || !parse_int(text.substr(17, 2), ss) || hh > 23 ||
      mm > 59 || ss > 60) {
    throw DataError("malformed time of day in '" + std::string(text) + "'");
  }
  return Timestamp{day_part} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_date(CalendarDate date) {
  using namespace std::chrono;
  year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  auto day_part = floor<days>(ts);
  hh_mm_ss<seconds> tod{ts - day_part};
  char buf[16];
  std::snprintf(buf, sizeof buf, "T%02d:%02d:%02d", static_cast<int>(tod.hours().count()),
                static_cast<int>(tod.minutes().count()), static_cast<int>(tod.seconds().count()));
  return format_date(day_part) + buf;
}

CalendarDate add_months(CalendarDate date, int months) {
  using namespace std::chrono;
  year_month_day ymd{date};
  year_month ym = year_month{ymd.year(), ymd.month()} + std::chrono::months{months};
  auto last = year_month_day_last{ym.year(), month_day_last{ym.month()}};
  day d = ymd.day() > last.day() ? last.day() : ymd.day();
  return sys_days{year_month_day{ym.year(), ym.month(), d}};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = splitmix64(base);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return splitmix64(s ^ c);
}

}  // namespace etrnn
