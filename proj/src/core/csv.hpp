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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gtx::csv {

// Shortest round-trip representation ("%.17g"), so CSVs reproduce bit-exactly.
std::string fmt(double v);

using Row = std::vector<std::string>;

class Table {
 public:
  Table() = default;
  explicit Table(Row header) : header_(std::move(header)) {}

  const Row& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  void add(Row r);
  std::size_t column(const std::string& name) const;

  std::string str() const;
  void write(const std::filesystem::path& p) const;
  static Table parse(const std::string& text);
  static Table read(const std::filesystem::path& p);

 private:
  Row header_;
  std::vector<Row> rows_;
};

}  // namespace gtx::csv
