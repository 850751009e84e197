// Copyright 2026 The stablevl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ============================================================================
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace svl::taskspec {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by the reserved
// special tokens in a fixed order.
class ToyVocab {
 public:
  ToyVocab();

  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  std::size_t size() const { return 256 + specials_.size(); }
  int id_of(std::string_view special) const;
  bool is_special(int id) const { return id >= 256 && static_cast<std::size_t>(id) < size(); }
  const std::vector<std::string>& specials() const { return specials_; }

 private:
  std::vector<std::string> specials_;
  std::vector<std::size_t> by_length_;  // special indices, longest first
};

const ToyVocab& default_vocab();

}  // namespace svl::taskspec
