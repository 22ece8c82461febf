// Copyright 2026 The gtxai Authors
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

#include "core/csv.hpp"

#include <cmath>
#include <cstdio>

#include "core/error.hpp"
#include "core/io.hpp"

namespace gtx::csv {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) return "0";  // folds -0 so identical runs never differ in sign of zero
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void Table::add(Row r) {
  if (!header_.empty() && r.size() != header_.size())
    throw IoError("csv row has " + std::to_string(r.size()) + " fields, header has " +
                  std::to_string(header_.size()));
  rows_.push_back(std::move(r));
}

std::size_t Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  throw IoError("csv has no column '" + name + "'");
}

std::string Table::str() const {
  std::string out;
  auto emit = [&](const Row& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += r[i];
    }
    out += '\n';
  };
  emit(header_);
  for (const auto& r : rows_) emit(r);
  return out;
}

void Table::write(const std::filesystem::path& p) const { io::write_text(p, str()); }

Table Table::parse(const std::string& text) {
  Table t;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Row r;
    std::size_t s = 0;
    for (;;) {
      std::size_t c = line.find(',', s);
      r.push_back(line.substr(s, c == std::string::npos ? std::string::npos : c - s));
      if (c == std::string::npos) break;
      s = c + 1;
    }
    if (first) {
      t.header_ = std::move(r);
      first = false;
    } else {
      t.add(std::move(r));
    }
  }
  return t;
}

Table Table::read(const std::filesystem::path& p) { return parse(io::read_text(p)); }

}  // namespace gtx::csv
