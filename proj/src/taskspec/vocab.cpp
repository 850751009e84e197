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
#include "taskspec/vocab.hpp"

#include <algorithm>
#include <numeric>

#include "common/error.hpp"
#include "taskspec/template.hpp"

namespace svl::taskspec {

ToyVocab::ToyVocab()
    : specials_{std::string(kHumanMarker), std::string(kAssistantMarker), std::string(kImgOpen),
                std::string(kImgClose), std::string(kImagePlaceholder)} {
  for (Task t : all_tasks()) specials_.push_back(task_token(t));
  by_length_.resize(specials_.size());
  std::iota(by_length_.begin(), by_length_.end(), 0);
  std::stable_sort(by_length_.begin(), by_length_.end(),
                   [&](std::size_t a, std::size_t b) { return specials_[a].size() > specials_[b].size(); });
}

std::vector<int> ToyVocab::encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    bool matched = false;
    for (std::size_t s : by_length_) {
      if (text.compare(pos, specials_[s].size(), specials_[s]) == 0) {
        ids.push_back(static_cast<int>(256 + s));
        pos += specials_[s].size();
        matched = true;
        break;
      }
    }
    if (!matched) ids.push_back(static_cast<unsigned char>(text[pos++]));
  }
  return ids;
}

std::string ToyVocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < 256) {
      out.push_back(static_cast<char>(id));
    } else if (is_special(id)) {
      out += specials_[static_cast<std::size_t>(id - 256)];
    } else {
      throw InvalidArgument("decode: unknown token id " + std::to_string(id));
    }
  }
  return out;
}

int ToyVocab::id_of(std::string_view special) const {
  for (std::size_t i = 0; i < specials_.size(); ++i) {
    if (specials_[i] == special) return static_cast<int>(256 + i);
  }
  throw InvalidArgument("vocab: '" + std::string(special) + "' is not a special token");
}

const ToyVocab& default_vocab() {
  static const ToyVocab vocab;
  return vocab;
}

}  // namespace svl::taskspec
