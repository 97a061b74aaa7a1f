/*
Copyright 2026 The skillctx Authors. All rights reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <skillctx/domain.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace skillctx {

using json = nlohmann::json;

// JSON forms of the domain records. Optional fields are omitted when empty
// so library files written by hand stay minimal.

inline void to_json(json& j, const SimEffect& e) {
  j = json{{"per_task_gain", e.per_task_gain}, {"message_cost", e.message_cost}, {"overlap_group", e.overlap_group}};
}

inline void from_json(const json& j, SimEffect& e) {
  e.per_task_gain = j.value("per_task_gain", std::map<std::string, double>{});
  e.message_cost = j.value("message_cost", 0.0);
  e.overlap_group = j.value("overlap_group", std::string{});
  for (const auto& [task, g] : e.per_task_gain) {
    if (g < -1.0 || g > 1.0) throw Error("SimEffect: gain for task '" + task + "' outside [-1, 1]");
  }
  if (e.message_cost < 0.0) throw Error("SimEffect: negative message_cost");
}

inline void to_json(json& j, const Skill& s) {
  j = json{{"id", s.id}, {"name", s.name}, {"description", s.description}, {"body", s.body}};
  if (s.effect) j["effect_params"] = *s.effect;
  if (!s.sources.empty()) j["sources"] = s.sources;
  if (!s.family.empty()) j["family"] = s.family;
}

inline void from_json(const json& j, Skill& s) {
  s.id = j.at("id").get<std::string>();
  s.name = j.value("name", s.id);
  s.description = j.value("description", std::string{});
  s.body = j.value("body", std::string{});
  if (j.contains("effect_params")) {
    s.effect = j.at("effect_params").get<SimEffect>();
  } else {
    s.effect.reset();
  }
  s.sources = j.value("sources", std::vector<std::string>{});
  s.family = j.value("family", std::string{});
}

inline void to_json(json& j, const Task& t) {
  j = json{{"id", t.id},
           {"instruction", t.instruction},
           {"domain", t.domain},
           {"base_pass", t.base_pass},
           {"base_messages", t.base_messages}};
}

inline void from_json(const json& j, Task& t) {
  t.id = j.at("id").get<std::string>();
  t.instruction = j.value("instruction", std::string{});
  t.domain = j.value("domain", std::string{});
  t.base_pass = j.value("base_pass", 0.0);
  t.base_messages = j.value("base_messages", 0.0);
  if (t.base_pass < 0.0 || t.base_pass > 1.0) throw Error("Task '" + t.id + "': base_pass outside [0, 1]");
  if (t.base_messages < 0.0) throw Error("Task '" + t.id + "': negative base_messages");
}

inline void to_json(json& j, const RolloutRecord& r) {
  j = json{{"task_id", r.task_id},
           {"context_skill_ids", r.context_skill_ids},
           {"seed", r.seed},
           {"reward", r.reward},
           {"messages", r.messages}};
}

inline void from_json(const json& j, RolloutRecord& r) {
  r.task_id = j.at("task_id").get<std::string>();
  r.context_skill_ids = j.value("context_skill_ids", std::vector<std::string>{});
  r.seed = j.at("seed").get<std::uint64_t>();
  r.reward = j.at("reward").get<int>();
  r.messages = j.at("messages").get<int>();
  if (r.reward != 0 && r.reward != 1) throw Error("RolloutRecord: reward must be 0 or 1");
  if (r.messages < 0) throw Error("RolloutRecord: negative message count");
}

inline void to_json(json& j, const UtilityLabel& l) {
  j = json{{"task_id", l.task_id}, {"skill_id", l.skill_id}, {"delta", l.delta}, {"y", l.y}, {"rollouts", l.rollouts}};
}

inline void from_json(const json& j, UtilityLabel& l) {
  l.task_id = j.at("task_id").get<std::string>();
  l.skill_id = j.at("skill_id").get<std::string>();
  l.delta = j.at("delta").get<double>();
  l.y = j.contains("y") ? j.at("y").get<double>() : label_from_delta(l.delta);
  l.rollouts = j.value("rollouts", 0);
}

inline void to_json(json& j, const SkillLibrary& lib) { j = lib.skills(); }

inline void from_json(const json& j, SkillLibrary& lib) { lib = SkillLibrary(j.get<std::vector<Skill>>()); }

namespace io {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open '" + p.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view contents) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + p.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

inline json read_json(const std::filesystem::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw Error("malformed JSON in '" + p.string() + "': " + e.what());
  }
}

inline void write_json(const std::filesystem::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& p) {
  std::vector<T> out;
  std::istringstream in(read_file(p));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const json::exception& e) {
      throw Error(p.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) {
    out += json(item).dump();
    out.push_back('\n');
  }
  return out;
}

template <typename T>
void write_jsonl(const std::filesystem::path& p, const std::vector<T>& items) {
  write_file(p, to_jsonl(items));
}

}  // namespace io
}  // namespace skillctx
