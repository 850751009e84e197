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
#include "taskspec/data.hpp"

#include <algorithm>

#include "autograd/rng.hpp"
#include "common/error.hpp"
#include "vision/vision.hpp"

namespace svl::taskspec {

namespace {

const char* const kNumbers[] = {"zero", "one", "two", "three"};
const char* const kWords[] = {"cat", "tree", "lamp", "river", "stone", "cloud", "bread", "glass"};

std::string position(const vision::Scene& scene, const vision::SceneObject& o) {
  const double half = scene.grid / 2.0;
  const double r = (o.row0 + o.row1) / 2.0, c = (o.col0 + o.col1) / 2.0;
  const std::string row = r < half - 0.5 ? "top" : (r > half + 0.5 ? "bottom" : "middle");
  const std::string col = c < half - 0.5 ? "left" : (c > half + 0.5 ? "right" : "center");
  return row + " " + col;
}

std::string caption(const vision::Scene& scene) {
  std::string out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i > 0) out += " and ";
    out += "a " + scene.objects[i].color + " block at " + position(scene, scene.objects[i]);
  }
  return out;
}

PixelBox box_of(const vision::Scene& scene, const vision::SceneObject& o, std::size_t res) {
  const auto b = vision::pixel_box(scene, o, res);
  return {b[0], b[1], b[2], b[3]};
}

TaskSample image_sample(std::uint64_t image_seed, std::size_t res) {
  TaskSample s;
  s.image_seed = image_seed;
  s.width = s.height = static_cast<double>(res);
  return s;
}

TaskSample text_sample(CounterRng& rng) {
  TaskSample s;
  s.task = Task::kVqa;
  const std::string word = kWords[rng.below(std::size(kWords))];
  switch (rng.below(3)) {
    case 0:
      s.instruction = "reverse the word " + word;
      s.target = std::string(word.rbegin(), word.rend());
      break;
    case 1: {
      const auto a = rng.below(10), b = rng.below(10);
      s.instruction = "what is " + std::to_string(a) + " plus " + std::to_string(b);
      s.target = std::to_string(a + b);
      break;
    }
    default:
      s.instruction = "repeat " + word;
      s.target = word;
  }
  return s;
}

TaskSample multitask_sample(Task task, std::uint64_t image_seed, CounterRng& rng) {
  const std::size_t res = stage_resolution(4);
  const auto scene = vision::make_scene(image_seed);
  const auto& pick = scene.objects[rng.below(scene.objects.size())];
  TaskSample s = image_sample(image_seed, res);
  s.task = task;
  switch (task) {
    case Task::kVqa:
      s.instruction = "what color is the block at " + position(scene, pick);
      s.target = pick.color;
      break;
    case Task::kCaption:
      s.instruction = "describe the image";
      s.target = caption(scene);
      break;
    case Task::kGrounding:
      s.instruction = "describe the image with boxes";
      s.target = caption(scene);
      for (const auto& o : scene.objects) s.boxes.push_back(box_of(scene, o, res));
      break;
    case Task::kRefer:
      s.instruction = "the " + pick.color + " block";
      s.boxes.push_back(box_of(scene, pick, res));
      break;
    case Task::kIdentify:
      s.instruction = "what is in";
      s.target = pick.color + " block";
      s.boxes.push_back(box_of(scene, pick, res));
      break;
    case Task::kDetection:
      s.instruction = "blocks";
      for (const auto& o : scene.objects) s.boxes.push_back(box_of(scene, o, res));
      break;
  }
  return s;
}

}  // namespace

std::size_t stage_resolution(int stage_id) {
  if (stage_id < 1 || stage_id > 4) throw InvalidArgument("stage id must be 1..4, got " + std::to_string(stage_id));
  return stage_id == 4 ? 448 : 224;
}

std::vector<TaskSample> build_stage_batch(int stage_id, std::uint64_t seed, std::size_t n) {
  const std::size_t res = stage_resolution(stage_id);
  if (n == 0) throw InvalidArgument("build_stage_batch: n must be at least 1");
  std::vector<TaskSample> out;
  out.reserve(n);
  const CounterRng root = CounterRng(seed).fork("stage_batch", static_cast<std::uint64_t>(stage_id));
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = root.fork("sample", i);
    const std::uint64_t image_seed = rng.next_u64() >> 16;
    const auto scene = vision::make_scene(image_seed);
    TaskSample s;
    if (stage_id <= 2) {
      s = image_sample(image_seed, res);
      s.task = Task::kCaption;
      s.instruction = "describe the image";
      s.target = caption(scene);
      s.multitask = false;
    } else if (stage_id == 3) {
      s = image_sample(image_seed, res);
      s.multitask = false;
      const auto& pick = scene.objects[rng.below(scene.objects.size())];
      switch (rng.below(3)) {
        case 0:
          s.task = Task::kCaption;
          s.instruction = "describe the image in detail";
          s.target = caption(scene);
          break;
        case 1:
          s.task = Task::kVqa;
          s.instruction = "what color is the block at " + position(scene, pick);
          s.target = pick.color;
          break;
        default:
          s.task = Task::kVqa;
          s.instruction = "how many blocks are there";
          s.target = kNumbers[scene.objects.size()];
      }
    } else if (rng.uniform() < 0.1) {
      s = text_sample(rng);
    } else {
      s = multitask_sample(all_tasks()[rng.below(all_tasks().size())], image_seed, rng);
    }
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

TokenizedSample tokenize(const TaskSample& sample, const ToyVocab& vocab) {
  const std::vector<int> prompt = vocab.encode(render_prompt(sample));
  TokenizedSample t;
  t.ids = vocab.encode(render(sample));
  // The prompt ends in an atomic marker, so it is a token prefix of the whole.
  t.labels.assign(t.ids.size(), -1);
  for (std::size_t i = prompt.size() - 1; i + 1 < t.ids.size(); ++i) t.labels[i] = t.ids[i + 1];
  const int placeholder = vocab.id_of(kImagePlaceholder);
  t.image_pos = static_cast<std::size_t>(std::find(t.ids.begin(), t.ids.end(), placeholder) - t.ids.begin());
  return t;
}

}  // namespace svl::taskspec
