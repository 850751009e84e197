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
#include "harness/run_config.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "common/error.hpp"
#include "json.hpp"

namespace svl::harness {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const std::set<std::string> kGroups{"embeddings", "attention", "mlp", "norms", "lora", "projection_stack", "lm_head"};

// Walks one JSON object, remembering which keys were consumed so that
// leftovers can be reported by their full path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  static void fail(const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void real(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(field(key), "expected a number");
      out = v->get<double>();
    }
  }
  template <typename T>
  void integer(const std::string& key, T& out, T min = 0) {
    if (const json* v = find(key)) out = as_integer<T>(*v, field(key), min);
  }
  void text(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  std::optional<Reader> object(const std::string& key) {
    if (const json* v = find(key)) return Reader(*v, field(key));
    return std::nullopt;
  }
  std::optional<std::set<std::string>> string_set(const std::string& key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) fail(field(key), "expected an array of strings");
    std::set<std::string> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) fail(field(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.insert((*v)[i].get<std::string>());
    }
    return out;
  }

  template <typename T>
  static T as_integer(const json& v, const std::string& f, T min) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) fail(f, "expected an integer");
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) fail(f, "out of range");
      if (static_cast<T>(u) < min) fail(f, "must be at least " + std::to_string(min));
      return static_cast<T>(u);
    }
    const auto s = v.get<std::int64_t>();
    if (s < static_cast<std::int64_t>(min)) fail(f, "must be at least " + std::to_string(min));
    return static_cast<T>(s);
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!k.empty() && k[0] == '_') continue;
      if (!seen_.count(k)) fail(field(k), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

curriculum::Schedule parse_schedule(Reader& r, const std::string& f) {
  std::string type;
  r.text("type", type);
  if (type == "sawtooth") {
    curriculum::SawtoothLinear s;
    s.period = 0;
    r.real("lr_start", s.lr_start);
    r.real("lr_end", s.lr_end);
    r.integer("period", s.period);
    r.finish();
    return s;
  }
  if (type == "warmup_cosine") {
    curriculum::WarmupCosine w;
    r.integer("warmup_steps", w.warmup_steps);
    r.real("warmup_lr", w.warmup_lr);
    r.real("init_lr", w.init_lr);
    r.real("min_lr", w.min_lr);
    r.finish();
    return w;
  }
  Reader::fail(f + ".type", "expected \"sawtooth\" or \"warmup_cosine\", got \"" + type + "\"");
  return {};
}

template <typename F>
void with_field(const std::string& f, F&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(f, 0) == 0) throw;
    throw ConfigError(f + ": " + msg);
  } catch (const Error& e) {
    throw ConfigError(f + ": " + e.what());
  }
}

}  // namespace

std::vector<StageEntry> default_stages() {
  std::vector<StageEntry> out(4);
  for (int i = 0; i < 4; ++i) out[i].id = i + 1;
  return out;
}

std::vector<curriculum::StageSpec> RunConfig::stage_specs() const {
  std::vector<curriculum::StageSpec> out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& e = stages[i];
    const std::string f = "stages[" + std::to_string(i) + "]";
    curriculum::StageSpec spec;
    with_field(f + ".scale_divisor", [&] { spec = curriculum::build_stage_plan(e.id, e.scale_divisor); });
    with_field(f, [&] {
      if (e.epochs) spec.epochs = *e.epochs;
      if (e.iters_per_epoch) spec.iters_per_epoch = *e.iters_per_epoch;
      if (e.schedule) spec.schedule = *e.schedule;
      auto* saw = std::get_if<curriculum::SawtoothLinear>(&spec.schedule);
      if (saw && (!e.schedule || saw->period == 0)) saw->period = spec.iters_per_epoch;
      if (auto* w = std::get_if<curriculum::WarmupCosine>(&spec.schedule)) w->total_steps = spec.total_steps();
      if (e.trainable_groups) {
        for (const auto& g : *e.trainable_groups) {
          if (!kGroups.count(g)) throw ConfigError(f + ".trainable_groups: unknown parameter group \"" + g + "\"");
        }
        spec.trainable_groups = *e.trainable_groups;
      }
    });
    with_field(f + ".schedule", [&] { curriculum::validate(spec.schedule); });
    with_field(f, [&] { spec.validate(); });
    out.push_back(std::move(spec));
  }
  return out;
}

void RunConfig::validate() const {
  with_field("model", [&] { model.block.validate(); });
  with_field("lora", [&] { model.lora.validate(); });
  with_field("vision", [&] { model.vision.validate(); });
  model.validate();
  if (stages.empty()) throw ConfigError("stages: at least one stage is required");
  stage_specs();
  if (samples_per_stage == 0) throw ConfigError("samples_per_stage: must be at least 1");
  if (!(train.lr_scale >= 0.0)) throw ConfigError("training.lr_scale: must be non-negative");
  if (!(train.adam_beta1 >= 0.0 && train.adam_beta1 < 1.0)) throw ConfigError("training.adam_beta1: must be in [0, 1)");
  if (!(train.adam_beta2 >= 0.0 && train.adam_beta2 < 1.0)) throw ConfigError("training.adam_beta2: must be in [0, 1)");
  if (!(train.adam_eps > 0.0)) throw ConfigError("training.adam_eps: must be positive");
  if (train.classify.window == 0) throw ConfigError("diagnostics.window: must be at least 1");
  if (!(train.classify.vanish_threshold >= 0.0)) throw ConfigError("diagnostics.vanish_threshold: must be non-negative");
  for (std::size_t i = 0; i < ablation_widths.size(); ++i) {
    const std::size_t w = ablation_widths[i];
    if (w == 0 || w % model.block.n_heads != 0) {
      throw ConfigError("ablation.widths[" + std::to_string(i) + "]: must be a positive multiple of model.n_heads");
    }
  }
  if (!(adversarial_qk_std > 0.0)) throw ConfigError("ablation.adversarial_qk_std: must be positive");
  if (probe_samples == 0) throw ConfigError("ablation.probe_samples: must be at least 1");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["data_seed"] = data_seed;
  j["samples_per_stage"] = samples_per_stage;
  j["output_dir"] = output_dir;
  const auto& b = model.block;
  j["model"] = {{"d_model", b.d_model},
                {"n_heads", b.n_heads},
                {"d_mlp", b.d_mlp},
                {"n_layers", model.n_layers},
                {"max_seq", model.max_seq},
                {"use_input_layernorm", b.use_input_layernorm},
                {"use_rms_postnorm", b.use_rms_postnorm},
                {"use_qk_norm", b.use_qk_norm},
                {"use_lora", b.use_lora},
                {"rms_gain", b.rms_gain},
                {"eps_ln", b.eps_ln},
                {"eps_rms", b.eps_rms},
                {"qk_init_std", model.qk_init_std}};
  j["lora"] = {{"rank", model.lora.rank}, {"alpha", model.lora.alpha}, {"targets", model.lora.targets}};
  const auto& v = model.vision;
  j["vision"] = {{"patch_size", v.patch_size}, {"max_resolution", v.max_resolution}, {"d_vis", v.d_vis},
                 {"enc_heads", v.enc_heads},   {"n_query", v.n_query},               {"d_q", v.d_q},
                 {"d_mid", v.d_mid},           {"encoder_seed", v.encoder_seed}};
  ordered_json st = ordered_json::array();
  for (const auto& e : stages) {
    ordered_json s;
    s["id"] = e.id;
    s["scale_divisor"] = e.scale_divisor;
    if (e.epochs) s["epochs"] = *e.epochs;
    if (e.iters_per_epoch) s["iters_per_epoch"] = *e.iters_per_epoch;
    if (e.schedule) {
      if (const auto* saw = std::get_if<curriculum::SawtoothLinear>(&*e.schedule)) {
        s["schedule"] = {{"type", "sawtooth"}, {"lr_start", saw->lr_start}, {"lr_end", saw->lr_end}, {"period", saw->period}};
      } else {
        const auto& w = std::get<curriculum::WarmupCosine>(*e.schedule);
        s["schedule"] = {{"type", "warmup_cosine"}, {"warmup_steps", w.warmup_steps}, {"warmup_lr", w.warmup_lr},
                         {"init_lr", w.init_lr},    {"min_lr", w.min_lr}};
      }
    }
    if (e.trainable_groups) s["trainable_groups"] = *e.trainable_groups;
    st.push_back(s);
  }
  j["stages"] = st;
  j["training"] = {{"optimizer", train.optimizer == curriculum::Optimizer::kAdam ? "adam" : "sgd"},
                   {"lr_scale", train.lr_scale},
                   {"batch_size", train.batch_size},
                   {"adam_beta1", train.adam_beta1},
                   {"adam_beta2", train.adam_beta2},
                   {"adam_eps", train.adam_eps},
                   {"halt_on_vanish", train.halt_on_vanish}};
  j["diagnostics"] = {{"window", train.classify.window}, {"vanish_threshold", train.classify.vanish_threshold}};
  j["ablation"] = {{"widths", ablation_widths},
                   {"adversarial_qk_std", adversarial_qk_std},
                   {"probe_samples", probe_samples}};
  return j.dump(2);
}

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  RunConfig cfg;
  Reader r(root, "");
  r.integer("seed", cfg.seed);
  r.integer("data_seed", cfg.data_seed);
  r.integer<std::size_t>("samples_per_stage", cfg.samples_per_stage, 1);
  r.text("output_dir", cfg.output_dir);
  if (auto m = r.object("model")) {
    auto& b = cfg.model.block;
    m->integer<std::size_t>("d_model", b.d_model, 1);
    m->integer<std::size_t>("n_heads", b.n_heads, 1);
    m->integer<std::size_t>("d_mlp", b.d_mlp, 1);
    m->integer<std::size_t>("n_layers", cfg.model.n_layers, 1);
    m->integer<std::size_t>("max_seq", cfg.model.max_seq, 1);
    m->boolean("use_input_layernorm", b.use_input_layernorm);
    m->boolean("use_rms_postnorm", b.use_rms_postnorm);
    m->boolean("use_qk_norm", b.use_qk_norm);
    m->boolean("use_lora", b.use_lora);
    m->boolean("rms_gain", b.rms_gain);
    m->real("eps_ln", b.eps_ln);
    m->real("eps_rms", b.eps_rms);
    m->real("qk_init_std", cfg.model.qk_init_std);
    m->finish();
  }
  if (auto l = r.object("lora")) {
    l->integer<std::size_t>("rank", cfg.model.lora.rank, 1);
    l->real("alpha", cfg.model.lora.alpha);
    if (auto t = l->string_set("targets")) cfg.model.lora.targets = *t;
    l->finish();
  }
  if (auto v = r.object("vision")) {
    auto& vc = cfg.model.vision;
    v->integer<std::size_t>("patch_size", vc.patch_size, 1);
    v->integer<std::size_t>("max_resolution", vc.max_resolution, 1);
    v->integer<std::size_t>("d_vis", vc.d_vis, 1);
    v->integer<std::size_t>("enc_heads", vc.enc_heads, 1);
    v->integer<std::size_t>("n_query", vc.n_query, 1);
    v->integer<std::size_t>("d_q", vc.d_q, 1);
    v->integer<std::size_t>("d_mid", vc.d_mid, 1);
    v->integer("encoder_seed", vc.encoder_seed);
    v->finish();
  }
  cfg.model.vision.d_lm = cfg.model.block.d_model;
  if (const json* st = r.find("stages")) {
    if (!st->is_array()) Reader::fail("stages", "expected an array");
    cfg.stages.clear();
    for (std::size_t i = 0; i < st->size(); ++i) {
      const std::string f = "stages[" + std::to_string(i) + "]";
      Reader s((*st)[i], f);
      StageEntry e;
      s.integer<int>("id", e.id, 1);
      if (e.id > 4) Reader::fail(f + ".id", "must be 1..4");
      s.integer<std::size_t>("scale_divisor", e.scale_divisor, 1);
      std::size_t n = 0;
      if (s.find("epochs")) {
        s.integer<std::size_t>("epochs", n, 1);
        e.epochs = n;
      }
      if (s.find("iters_per_epoch")) {
        s.integer<std::size_t>("iters_per_epoch", n, 1);
        e.iters_per_epoch = n;
      }
      if (auto sch = s.object("schedule")) e.schedule = parse_schedule(*sch, f + ".schedule");
      e.trainable_groups = s.string_set("trainable_groups");
      s.finish();
      cfg.stages.push_back(std::move(e));
    }
  }
  if (auto t = r.object("training")) {
    std::string opt = "sgd";
    t->text("optimizer", opt);
    if (opt == "sgd") {
      cfg.train.optimizer = curriculum::Optimizer::kSgd;
    } else if (opt == "adam") {
      cfg.train.optimizer = curriculum::Optimizer::kAdam;
    } else {
      Reader::fail("training.optimizer", "expected \"sgd\" or \"adam\", got \"" + opt + "\"");
    }
    t->real("lr_scale", cfg.train.lr_scale);
    t->integer("batch_size", cfg.train.batch_size);
    t->real("adam_beta1", cfg.train.adam_beta1);
    t->real("adam_beta2", cfg.train.adam_beta2);
    t->real("adam_eps", cfg.train.adam_eps);
    t->boolean("halt_on_vanish", cfg.train.halt_on_vanish);
    t->finish();
  }
  if (auto d = r.object("diagnostics")) {
    d->integer<std::size_t>("window", cfg.train.classify.window, 1);
    d->real("vanish_threshold", cfg.train.classify.vanish_threshold);
    d->finish();
  }
  if (auto a = r.object("ablation")) {
    if (const json* w = a->find("widths")) {
      if (!w->is_array()) Reader::fail("ablation.widths", "expected an array of integers");
      cfg.ablation_widths.clear();
      for (std::size_t i = 0; i < w->size(); ++i) {
        cfg.ablation_widths.push_back(
            Reader::as_integer<std::size_t>((*w)[i], "ablation.widths[" + std::to_string(i) + "]", 1));
      }
    }
    a->real("adversarial_qk_std", cfg.adversarial_qk_std);
    a->integer<std::size_t>("probe_samples", cfg.probe_samples, 1);
    a->finish();
  }
  r.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace svl::harness
