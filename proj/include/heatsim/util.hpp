// Copyright (c) The Heatsim Authors.
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

#ifndef HEATSIM_UTIL_HPP_
#define HEATSIM_UTIL_HPP_

#include <string>
#include <vector>

namespace heatsim {

// Shortest decimal representation that round-trips the double exactly.
// Used for all CSV output so that identical runs produce identical bytes.
std::string format_double(double value);

// Splits one CSV line on ','. Fields in our formats never contain commas
// or quotes, so no quoting rules apply.
std::vector<std::string> split_csv_line(const std::string& line);

double parse_double(const std::string& field, const std::string& context);
long long parse_int(const std::string& field, const std::string& context);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Splits file content into lines; tolerates a trailing newline and CR endings.
std::vector<std::string> split_lines(const std::string& content);

}  // namespace heatsim

#endif  // HEATSIM_UTIL_HPP_
