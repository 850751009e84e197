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
#include "taskspec/template.hpp"

#include <cmath>

#include "common/error.hpp"
#include "json.hpp"

namespace svl::taskspec {

using nlohmann::json;

const std::vector<Task>& all_tasks() {
  static const std::vector<Task> tasks{Task::kVqa,      Task::kCaption,  Task::kGrounding,
                                       Task::kRefer,    Task::kIdentify, Task::kDetection};
  return tasks;
}

std::string task_name(Task task) {
  switch (task) {
    case Task::kVqa: return "vqa";
    case Task::kCaption: return "caption";
    case Task::kGrounding: return "grounding";
    case Task::kRefer: return "refer";
    case Task::kIdentify: return "identify";
    case Task::kDetection: return "detection";
  }
  return "";
}

std::string task_token(Task task) { return "[" + task_name(task) + "]"; }

Task parse_task(std::string_view name) {
  for (Task t : all_tasks()) {
    if (task_name(t) == name) return t;
  }
  throw InvalidArgument("unknown task '" + std::string(name) +
                        "' (expected vqa, caption, grounding, refer, identify or detection)");
}

bool is_grounding_task(Task task) {
  return task == Task::kGrounding || task == Task::kRefer || task == Task::kIdentify || task == Task::kDetection;
}

NormBox normalize_box(const PixelBox& b, double width, double height) {
  if (!(width > 0.0) || !(height > 0.0)) throw InvalidArgument("normalize_box: image extent must be positive");
  const auto scale = [](double v, double extent) { return static_cast<int>(std::round(v * 100.0 / extent)); };
  return {scale(b.x1, width), scale(b.y1, height), scale(b.x2, width), scale(b.y2, height)};
}

std::string format_boxes(const std::vector<NormBox>& boxes) {
  std::string out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (i > 0) out += kBoxDelim;
    out += "{";
    for (int v : boxes[i]) out += "<" + std::to_string(v) + ">";
    out += "}";
  }
  return out;
}

void TaskSample::validate() const {
  if (is_grounding_task(task) && boxes.empty()) {
    throw InvalidArgument(task_name(task) + " sample needs at least one box");
  }
  if (!is_grounding_task(task) && !boxes.empty()) {
    throw InvalidArgument(task_name(task) + " sample must not carry boxes");
  }
  if (!(width > 0.0) || !(height > 0.0)) throw InvalidArgument("sample width and height must be positive");
  for (const auto& b : boxes) {
    if (!(0.0 <= b.x1 && b.x1 <= b.x2 && b.x2 <= width && 0.0 <= b.y1 && b.y1 <= b.y2 && b.y2 <= height)) {
      throw InvalidArgument("box outside the image or with reversed corners");
    }
  }
}

namespace {

std::string attach(const std::string& text, const std::string& boxes) {
  return text.empty() ? boxes : text + " " + boxes;
}

std::string boxes_text(const TaskSample& s) {
  std::vector<NormBox> norm;
  for (const auto& b : s.boxes) norm.push_back(normalize_box(b, s.width, s.height));
  return format_boxes(norm);
}

}  // namespace

std::string full_instruction(const TaskSample& s) {
  return s.task == Task::kIdentify ? attach(s.instruction, boxes_text(s)) : s.instruction;
}

std::string full_target(const TaskSample& s) {
  return is_grounding_task(s.task) && s.task != Task::kIdentify ? attach(s.target, boxes_text(s)) : s.target;
}

std::string render_prompt(const TaskSample& s) {
  s.validate();
  std::string out(kHumanMarker);
  out += " ";
  if (s.image_seed) {
    out += kImgOpen;
    out += kImagePlaceholder;
    out += kImgClose;
    out += " ";
  }
  if (s.multitask) out += task_token(s.task) + " ";
  out += full_instruction(s);
  out += kAssistantMarker;
  return out;
}

std::string render(const TaskSample& s) { return render_prompt(s) + " " + full_target(s); }

std::string strip_markers(std::string_view prompt) {
  const auto eat = [&](std::string_view prefix) {
    if (prompt.substr(0, prefix.size()) != prefix) return false;
    prompt.remove_prefix(prefix.size());
    return true;
  };
  if (!eat(kHumanMarker) || !eat(" ")) throw InvalidArgument("strip_markers: missing human marker");
  const std::string image = std::string(kImgOpen) + std::string(kImagePlaceholder) + std::string(kImgClose) + " ";
  eat(image);
  for (Task t : all_tasks()) {
    if (eat(task_token(t) + " ")) break;
  }
  const auto end = prompt.find(kAssistantMarker);
  if (end == std::string_view::npos) throw InvalidArgument("strip_markers: missing assistant marker");
  return std::string(prompt.substr(0, end));
}

TaskSample sample_from_json(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("sample must be a JSON object");
  TaskSample s;
  const auto field = [&](const char* name) -> const json& {
    if (!j.contains(name)) throw InvalidArgument(std::string("missing field '") + name + "'");
    return j.at(name);
  };
  try {
    s.task = parse_task(field("task").get<std::string>());
    if (j.contains("image_seed") && !j.at("image_seed").is_null()) s.image_seed = j.at("image_seed").get<std::uint64_t>();
    s.instruction = field("instruction").get<std::string>();
    s.target = field("target").get<std::string>();
    s.width = j.value("width", 224.0);
    s.height = j.value("height", 224.0);
    s.multitask = j.value("multitask", true);
    if (j.contains("boxes")) {
      for (const auto& b : j.at("boxes")) {
        if (!b.is_array() || b.size() != 4) throw InvalidArgument("each box must be [x1, y1, x2, y2]");
        s.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad field type: ") + e.what());
  }
  s.validate();
  return s;
}

std::string sample_to_json(const TaskSample& s) {
  json j;
  j["task"] = task_name(s.task);
  j["image_seed"] = s.image_seed ? json(*s.image_seed) : json(nullptr);
  j["instruction"] = s.instruction;
  j["target"] = s.target;
  json boxes = json::array();
  for (const auto& b : s.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2});
  j["boxes"] = boxes;
  j["width"] = s.width;
  j["height"] = s.height;
  j["multitask"] = s.multitask;
  return j.dump();
}

}  // namespace svl::taskspec
