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

#ifndef HEATSIM_ERROR_HPP_
#define HEATSIM_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <utility>

namespace heatsim {

// Failure with a stable machine-readable code ("UnevenBursts", "ModelMissing", ...).
// The code is what tests and the CLI exit-code mapping key on; the detail is for humans.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(detail.empty() ? code : code + ": " + detail),
        code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace heatsim

#endif  // HEATSIM_ERROR_HPP_
