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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace svl::taskspec {

inline constexpr std::string_view kHumanMarker = "###Human:";
inline constexpr std::string_view kAssistantMarker = "###Assistant:";
inline constexpr std::string_view kImgOpen = "<Img>";
inline constexpr std::string_view kImgClose = "</Img>";
inline constexpr std::string_view kImagePlaceholder = "<ImageHere>";
inline constexpr std::string_view kBoxDelim = "<delim>";

enum class Task { kVqa, kCaption, kGrounding, kRefer, kIdentify, kDetection };

const std::vector<Task>& all_tasks();
std::string task_token(Task task);  // "[vqa]", ...
std::string task_name(Task task);   // "vqa", ...
Task parse_task(std::string_view name);
// Tasks whose text carries boxes.
bool is_grounding_task(Task task);

struct PixelBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

using NormBox = std::array<int, 4>;

// Scales each coordinate by 100 / extent and rounds half away from zero.
NormBox normalize_box(const PixelBox& box, double width, double height);

// "{<x1><y1><x2><y2>}", several boxes joined by "<delim>".
std::string format_boxes(const std::vector<NormBox>& boxes);

struct TaskSample {
  Task task = Task::kVqa;
  std::optional<std::uint64_t> image_seed;  // empty for text-only samples
  std::string instruction;
  std::string target;
  std::vector<PixelBox> boxes;
  double width = 224, height = 224;
  // Task token present (multi-task stage) or omitted.
  bool multitask = true;

  // Throws InvalidArgument on box/task inconsistencies.
  void validate() const;
};

// Instruction and target text after boxes have been attached: identify puts
// them on the instruction, the other grounding tasks on the target.
std::string full_instruction(const TaskSample& s);
std::string full_target(const TaskSample& s);

// "###Human: <Img><ImageHere></Img> [task] {instruction}###Assistant:"
std::string render_prompt(const TaskSample& s);
// render_prompt followed by " " and the target.
std::string render(const TaskSample& s);

// Inverse of render_prompt for the instruction slot.
std::string strip_markers(std::string_view prompt);

// One JSON object per line.
TaskSample sample_from_json(std::string_view line);
std::string sample_to_json(const TaskSample& s);

}  // namespace svl::taskspec
