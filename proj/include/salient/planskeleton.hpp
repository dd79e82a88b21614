#pragma once

// Plan skeletons: skill definitions, the planner prompt and structured
// output schema derived from them, validation of the planner's response,
// and expansion of a semantic plan into a full plan through per-skill
// generate_parameters hooks.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "salient/error.hpp"
#include "salient/io_util.hpp"

namespace salient {

struct SemanticParam {
  std::string name;
  std::string description;
  bool operator==(const SemanticParam&) const = default;
};

struct SkillDefinition {
  bool human_inferable = false;
  std::string name;
  std::string description;
  std::vector<SemanticParam> semantic_params;
  std::vector<std::string> nonsemantic_params;  // type tags, e.g. "int"
  // Built-in generate_parameters hook: "grasp", "place", "search" or empty
  // for none. Inferred from the name when absent from the definition file.
  std::string hook;
  bool operator==(const SkillDefinition&) const = default;
};

inline constexpr const char* kActionKey = "action";

inline std::string default_hook_for(const std::string& name) {
  if (name == "Pick" || name == "Grasp") return "grasp";
  if (name == "Place") return "place";
  if (name == "Search") return "search";
  return "";
}

inline void validate_skills(const std::vector<SkillDefinition>& skills) {
  std::set<std::string> names;
  for (const auto& s : skills) {
    if (s.name.empty()) throw ValidationError("skill with empty name");
    if (!names.insert(s.name).second) throw ValidationError("duplicate skill name '" + s.name + "'");
    std::set<std::string> params;
    for (const auto& p : s.semantic_params) {
      if (p.name == kActionKey) {
        throw ValidationError("skill '" + s.name + "': parameter name 'action' is reserved");
      }
      if (!params.insert(p.name).second) {
        throw ValidationError("skill '" + s.name + "': duplicate parameter '" + p.name + "'");
      }
    }
  }
}

inline std::vector<const SkillDefinition*> human_inferable(const std::vector<SkillDefinition>& skills) {
  std::vector<const SkillDefinition*> out;
  for (const auto& s : skills) {
    if (s.human_inferable) out.push_back(&s);
  }
  if (out.empty()) throw ValidationError("no human-inferable skills to describe");
  return out;
}

namespace detail {

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string plural(const std::string& word) {
  auto ends = [&](const char* suf) {
    const std::string s(suf);
    return word.size() >= s.size() && word.compare(word.size() - s.size(), s.size(), s) == 0;
  };
  if (ends("s") || ends("x") || ends("ch") || ends("sh")) return word + "es";
  return word + "s";
}

// "a", "a and b", "a, b and c"
inline std::string join_list(const std::vector<std::string>& items, const std::string& conj) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " " + conj + " " : ", ";
    out += items[i];
  }
  return out;
}

}  // namespace detail

// Planner prompt over the human-inferable skills, in definition order.
inline std::string build_prompt(const std::vector<SkillDefinition>& skills) {
  validate_skills(skills);
  const auto hs = human_inferable(skills);
  std::vector<std::string> plurals, singulars;
  for (const auto* s : hs) {
    plurals.push_back(detail::plural(detail::lower(s->name)));
    singulars.push_back(detail::lower(s->name));
  }
  std::string out = "You will be provided with a video of a human doing a sequence of " +
                    detail::join_list(plurals, "and") +
                    ".  You should analyze the video to determine the actions taken and the "
                    "objects involved and return this information using the schema provided.  "
                    "Here is a description of the actions and the parameters:\n";
  for (const auto* s : hs) {
    out += "- " + s->name + ": " + s->description + "\n";
    for (const auto& p : s->semantic_params) out += "  - " + p.name + ": " + p.description + "\n";
  }
  out += "- plan: A list of actions, each of which describes one " +
         detail::join_list(singulars, "or") + " along with the objects involved.";
  return out;
}

// JSON Schema for the planner's structured output: an "ActionPlan" object
// whose "plan" array holds any of the per-skill object types. Each type has
// a constant "action" discriminator and one string field per semantic
// parameter, all required.
inline Json build_schema(const std::vector<SkillDefinition>& skills) {
  validate_skills(skills);
  Json variants = Json::array();
  for (const auto* s : human_inferable(skills)) {
    Json props;
    props[kActionKey] = Json{{"type", "string"}, {"const", s->name}};
    Json required = Json::array({kActionKey});
    for (const auto& p : s->semantic_params) {
      props[p.name] = Json{{"type", "string"}, {"description", p.description}};
      required.push_back(p.name);
    }
    Json t;
    t["title"] = s->name;
    t["description"] = s->description;
    t["type"] = "object";
    t["properties"] = std::move(props);
    t["required"] = std::move(required);
    t["additionalProperties"] = false;
    variants.push_back(std::move(t));
  }
  Json plan;
  plan["description"] = "A sequence of actions";
  plan["type"] = "array";
  plan["items"] = Json{{"anyOf", std::move(variants)}};
  Json root;
  root["title"] = "ActionPlan";
  root["type"] = "object";
  root["properties"] = Json{{"plan", std::move(plan)}};
  root["required"] = Json::array({"plan"});
  root["additionalProperties"] = false;
  return root;
}

struct SemanticStep {
  std::string skill;
  std::map<std::string, std::string> params;
  bool operator==(const SemanticStep&) const = default;
};

struct SemanticPlan {
  std::vector<SemanticStep> steps;
  bool operator==(const SemanticPlan&) const = default;
};

// An object the Search step looks for: detector id when the object was
// manipulated, otherwise a name for open-vocabulary detection.
struct SearchTarget {
  std::optional<std::int32_t> mod_id;
  std::string name;
  bool operator==(const SearchTarget&) const = default;
};

struct PlanStep {
  std::string skill;
  std::map<std::string, std::string> params;
  std::optional<std::int32_t> mod_id;
  std::vector<SearchTarget> targets;  // Search steps only
  bool operator==(const PlanStep&) const = default;
};

struct FullPlan {
  std::vector<PlanStep> steps;
  bool operator==(const FullPlan&) const = default;
};

inline const SkillDefinition* find_skill(const std::vector<SkillDefinition>& skills,
                                         const std::string& name) {
  for (const auto& s : skills) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

// Validates a planner response against the skills. Errors name the JSON
// path of the offending value.
inline SemanticPlan parse_plan(std::string_view response, const std::vector<SkillDefinition>& skills) {
  using namespace detail;
  validate_skills(skills);
  const Json root = parse_json(response, "plan response");
  if (!root.is_object()) throw ValidationError("$: expected an object");
  for (const auto& [k, v] : root.items()) {
    if (k != "plan") throw ValidationError("$." + k + ": unexpected field");
  }
  const Json& plan = field(root, "plan", "$");
  if (!plan.is_array()) throw ValidationError("$.plan: expected an array");
  SemanticPlan out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string p = "$.plan[" + std::to_string(i) + "]";
    const Json& step = plan[i];
    const std::string action = get_string(field(step, kActionKey, p), p + ".action");
    const SkillDefinition* skill = find_skill(skills, action);
    if (!skill || !skill->human_inferable) {
      throw ValidationError(p + ".action: unknown action '" + action + "'");
    }
    SemanticStep s{action, {}};
    for (const auto& param : skill->semantic_params) {
      s.params[param.name] = get_string(field(step, param.name.c_str(), p), p + "." + param.name);
    }
    for (const auto& [k, v] : step.items()) {
      if (k != kActionKey && !s.params.count(k)) {
        throw ValidationError(p + "." + k + ": unknown parameter for '" + action + "'");
      }
    }
    out.steps.push_back(std::move(s));
  }
  return out;
}

inline Json semantic_plan_to_json(const SemanticPlan& plan) {
  Json steps = Json::array();
  for (const auto& s : plan.steps) {
    Json j;
    j[kActionKey] = s.skill;
    for (const auto& [k, v] : s.params) j[k] = v;
    steps.push_back(std::move(j));
  }
  return Json{{"plan", std::move(steps)}};
}

// --- Expansion --------------------------------------------------------------

struct ExpansionState {
  std::map<std::string, std::int32_t> mod_ids;  // object name -> detector id
  std::string search_skill = "Search";
};

// A generate_parameters hook may edit the whole plan. `index` is the
// position of the step being expanded and must be kept pointing at it when
// steps are inserted before it.
using ParameterHook = std::function<void(FullPlan&, std::size_t& index, ExpansionState&)>;

namespace detail {

inline std::size_t ensure_search(FullPlan& plan, std::size_t& index, const ExpansionState& st) {
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (plan.steps[i].skill == st.search_skill) return i;
  }
  plan.steps.insert(plan.steps.begin(), PlanStep{st.search_skill, {}, std::nullopt, {}});
  ++index;
  return 0;
}

inline const std::string& required_param(const PlanStep& step, const std::string& name) {
  auto it = step.params.find(name);
  if (it == step.params.end()) throw ValidationError("missing parameter '" + name + "'");
  return it->second;
}

inline void add_target(PlanStep& search, SearchTarget t) {
  for (auto& existing : search.targets) {
    if (existing.name == t.name) {
      if (t.mod_id) existing.mod_id = t.mod_id;
      return;
    }
  }
  search.targets.push_back(std::move(t));
}

}  // namespace detail

inline std::map<std::string, ParameterHook> builtin_hooks() {
  std::map<std::string, ParameterHook> hooks;
  hooks["search"] = [](FullPlan&, std::size_t&, ExpansionState&) {};
  hooks["grasp"] = [](FullPlan& plan, std::size_t& index, ExpansionState& st) {
    const std::size_t s = detail::ensure_search(plan, index, st);
    auto& step = plan.steps[index];
    const std::string& object = detail::required_param(step, "object_name");
    auto [it, fresh] = st.mod_ids.emplace(object, static_cast<std::int32_t>(st.mod_ids.size()));
    step.mod_id = it->second;
    detail::add_target(plan.steps[s], {it->second, object});
  };
  hooks["place"] = [](FullPlan& plan, std::size_t& index, ExpansionState& st) {
    const std::size_t s = detail::ensure_search(plan, index, st);
    const std::string place = detail::required_param(plan.steps[index], "place_name");
    detail::add_target(plan.steps[s], {std::nullopt, place});
  };
  return hooks;
}

inline FullPlan to_full_plan(const SemanticPlan& plan) {
  FullPlan out;
  for (const auto& s : plan.steps) out.steps.push_back({s.skill, s.params, std::nullopt, {}});
  return out;
}

// Runs every step's hook in plan order. Detector ids are reassigned from
// scratch in first-grasp order, so expanding an expanded plan is a no-op.
inline FullPlan expand_plan(const FullPlan& plan, const std::vector<SkillDefinition>& skills,
                            const std::map<std::string, ParameterHook>& hooks = builtin_hooks()) {
  validate_skills(skills);
  ExpansionState st;
  for (const auto& s : skills) {
    if ((s.hook.empty() ? default_hook_for(s.name) : s.hook) == "search") st.search_skill = s.name;
  }
  FullPlan out = plan;
  // Collapse duplicate Search steps into the first one.
  std::optional<std::size_t> first_search;
  for (std::size_t i = 0; i < out.steps.size();) {
    if (out.steps[i].skill != st.search_skill) {
      ++i;
      continue;
    }
    if (!first_search) {
      first_search = i++;
      continue;
    }
    for (auto& t : out.steps[i].targets) detail::add_target(out.steps[*first_search], t);
    out.steps.erase(out.steps.begin() + static_cast<std::ptrdiff_t>(i));
  }
  for (auto& step : out.steps) {
    if (step.skill != st.search_skill) step.mod_id.reset();
  }

  for (std::size_t i = 0; i < out.steps.size(); ++i) {
    const std::string name = out.steps[i].skill;
    const SkillDefinition* skill = find_skill(skills, name);
    if (!skill && name != st.search_skill) {
      throw ValidationError("step " + std::to_string(i) + ": unknown skill '" + name + "'");
    }
    const std::string hook = skill ? (skill->hook.empty() ? default_hook_for(name) : skill->hook)
                                   : "search";
    if (hook.empty()) continue;
    auto h = hooks.find(hook);
    if (h == hooks.end()) {
      throw ValidationError("step " + std::to_string(i) + " (" + name + "): no hook '" + hook + "'");
    }
    try {
      h->second(out, i, st);
    } catch (const std::exception& e) {
      throw ValidationError("step " + std::to_string(i) + " (" + name + "): " + e.what());
    }
  }
  return out;
}

inline FullPlan expand_plan(const SemanticPlan& plan, const std::vector<SkillDefinition>& skills,
                            const std::map<std::string, ParameterHook>& hooks = builtin_hooks()) {
  return expand_plan(to_full_plan(plan), skills, hooks);
}

// --- Operator plan edits ----------------------------------------------------

inline FullPlan skip_step(FullPlan plan, std::size_t index) {
  if (index >= plan.steps.size()) throw ValidationError("no step " + std::to_string(index));
  plan.steps.erase(plan.steps.begin() + static_cast<std::ptrdiff_t>(index));
  return plan;
}

// Renames an object everywhere it appears (parameters and Search targets).
inline FullPlan rename_label(FullPlan plan, const std::string& from, const std::string& to) {
  for (auto& step : plan.steps) {
    for (auto& [k, v] : step.params) {
      if (v == from) v = to;
    }
    for (auto& t : step.targets) {
      if (t.name == from) t.name = to;
    }
  }
  return plan;
}

// Manual correction of the grasp-order id mapping for one object.
inline FullPlan remap_mod_id(FullPlan plan, const std::string& object, std::int32_t id) {
  bool found = false;
  for (auto& step : plan.steps) {
    if (step.mod_id) {
      auto it = step.params.find("object_name");
      if (it != step.params.end() && it->second == object) {
        step.mod_id = id;
        found = true;
      }
    }
    for (auto& t : step.targets) {
      if (t.name == object && t.mod_id) t.mod_id = id;
    }
  }
  if (!found) throw ValidationError("no grasped object named '" + object + "'");
  return plan;
}

// Compact rendering, e.g. [Search({MOD_ID0, "basket"}), Pick(MOD_ID0), Place("basket")].
inline std::string to_display_string(const FullPlan& plan,
                                     const std::vector<SkillDefinition>& skills = {}) {
  auto quoted = [](const std::string& s) { return "\"" + s + "\""; };
  std::string out = "[";
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& s = plan.steps[i];
    if (i) out += ", ";
    out += s.skill + "(";
    if (!s.targets.empty() || s.params.empty()) {
      if (!s.targets.empty()) {
        out += "{";
        for (std::size_t k = 0; k < s.targets.size(); ++k) {
          if (k) out += ", ";
          out += s.targets[k].mod_id ? "MOD_ID" + std::to_string(*s.targets[k].mod_id)
                                     : quoted(s.targets[k].name);
        }
        out += "}";
      }
    } else if (s.mod_id) {
      out += "MOD_ID" + std::to_string(*s.mod_id);
    } else {
      // First declared semantic parameter is the step's object.
      std::string first;
      if (const SkillDefinition* def = find_skill(skills, s.skill); def && !def->semantic_params.empty()) {
        first = def->semantic_params.front().name;
      } else if (s.params.count("place_name")) {
        first = "place_name";
      } else {
        first = s.params.begin()->first;
      }
      auto it = s.params.find(first);
      if (it != s.params.end()) out += quoted(it->second);
    }
    out += ")";
  }
  return out + "]";
}

inline Json full_plan_to_json(const FullPlan& plan) {
  Json steps = Json::array();
  for (const auto& s : plan.steps) {
    Json j;
    j["skill"] = s.skill;
    if (!s.params.empty()) {
      Json params;
      for (const auto& [k, v] : s.params) params[k] = v;
      j["params"] = std::move(params);
    }
    if (s.mod_id) j["mod_id"] = *s.mod_id;
    if (!s.targets.empty()) {
      Json targets = Json::array();
      for (const auto& t : s.targets) {
        Json tj;
        if (t.mod_id) tj["mod_id"] = *t.mod_id;
        tj["name"] = t.name;
        targets.push_back(std::move(tj));
      }
      j["targets"] = std::move(targets);
    }
    steps.push_back(std::move(j));
  }
  return Json{{"plan", std::move(steps)}};
}

inline FullPlan full_plan_from_json(const Json& root) {
  using namespace detail;
  const Json& steps = field(root, "plan", "$");
  if (!steps.is_array()) throw ValidationError("$.plan: expected an array");
  FullPlan plan;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string p = "$.plan[" + std::to_string(i) + "]";
    PlanStep s;
    s.skill = get_string(field(steps[i], "skill", p), p + ".skill");
    if (auto it = steps[i].find("params"); it != steps[i].end()) {
      for (const auto& [k, v] : it->items()) s.params[k] = get_string(v, p + ".params." + k);
    }
    if (auto it = steps[i].find("mod_id"); it != steps[i].end()) {
      s.mod_id = static_cast<std::int32_t>(get_integer(*it, p + ".mod_id"));
    }
    if (auto it = steps[i].find("targets"); it != steps[i].end()) {
      for (std::size_t k = 0; k < it->size(); ++k) {
        const std::string tp = p + ".targets[" + std::to_string(k) + "]";
        SearchTarget t;
        t.name = get_string(field((*it)[k], "name", tp), tp + ".name");
        if ((*it)[k].contains("mod_id")) {
          t.mod_id = static_cast<std::int32_t>(get_integer((*it)[k]["mod_id"], tp + ".mod_id"));
        }
        s.targets.push_back(std::move(t));
      }
    }
    plan.steps.push_back(std::move(s));
  }
  return plan;
}

// --- Skill definition files -------------------------------------------------
//
// JSON array of {"human_inferable":bool,"name":..,"description":..,
// "semantic_params":[{"name":..,"description":..}],"nonsemantic_params":[..],
// "generate_parameters":"grasp"|"place"|"search"|""?}

inline std::vector<SkillDefinition> parse_skills(std::string_view text) {
  using namespace detail;
  const Json root = parse_json(text, "skill definitions");
  if (!root.is_array()) throw ValidationError("$: skill definitions must be an array");
  std::vector<SkillDefinition> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string p = "$[" + std::to_string(i) + "]";
    const Json& j = root[i];
    SkillDefinition s;
    const Json& h = field(j, "human_inferable", p);
    if (!h.is_boolean()) throw ValidationError(p + ".human_inferable: expected a boolean");
    s.human_inferable = h.get<bool>();
    s.name = get_string(field(j, "name", p), p + ".name");
    s.description = j.contains("description") ? get_string(j["description"], p + ".description") : "";
    if (auto it = j.find("semantic_params"); it != j.end()) {
      for (std::size_t k = 0; k < it->size(); ++k) {
        const std::string pp = p + ".semantic_params[" + std::to_string(k) + "]";
        s.semantic_params.push_back({get_string(field((*it)[k], "name", pp), pp + ".name"),
                                     get_string(field((*it)[k], "description", pp), pp + ".description")});
      }
    }
    if (auto it = j.find("nonsemantic_params"); it != j.end()) {
      for (std::size_t k = 0; k < it->size(); ++k) {
        s.nonsemantic_params.push_back(get_string((*it)[k], p + ".nonsemantic_params[" + std::to_string(k) + "]"));
      }
    }
    s.hook = j.contains("generate_parameters") ? get_string(j["generate_parameters"], p + ".generate_parameters")
                                               : default_hook_for(s.name);
    out.push_back(std::move(s));
  }
  validate_skills(out);
  return out;
}

// --- Planner backends -------------------------------------------------------

struct PlannerRequest {
  std::string prompt;
  Json schema;
  std::vector<std::int64_t> frame_indices;
};

class SemanticPlannerBackend {
 public:
  virtual ~SemanticPlannerBackend() = default;
  // Returns the raw structured-output text.
  virtual std::string generate(const PlannerRequest& request) = 0;
};

// Returns a canned response. Without one it answers with every
// human-inferable skill once, each parameter set to its own name.
class MockPlannerBackend : public SemanticPlannerBackend {
 public:
  explicit MockPlannerBackend(std::optional<std::string> canned = std::nullopt)
      : canned_(std::move(canned)) {}

  std::string generate(const PlannerRequest& request) override {
    if (canned_) return *canned_;
    Json steps = Json::array();
    const Json& variants = request.schema.at("properties").at("plan").at("items").at("anyOf");
    for (const auto& v : variants) {
      Json step;
      for (const auto& [k, prop] : v.at("properties").items()) {
        step[k] = k == kActionKey ? prop.at("const") : Json(k);
      }
      steps.push_back(std::move(step));
    }
    return Json{{"plan", std::move(steps)}}.dump();
  }

 private:
  std::optional<std::string> canned_;
};

// Frame indices sampled at roughly `target_hz` from a video at `fps`.
inline std::vector<std::int64_t> subsample_frames(std::int64_t frame_count, double fps,
                                                  double target_hz = 2.0) {
  if (!(fps > 0) || !(target_hz > 0)) throw ValidationError("fps and target rate must be positive");
  const auto step = std::max<std::int64_t>(1, std::llround(fps / target_hz));
  std::vector<std::int64_t> out;
  for (std::int64_t f = 0; f < frame_count; f += step) out.push_back(f);
  return out;
}

// Prompt, schema, backend call, validation, expansion.
inline FullPlan generate_plan(SemanticPlannerBackend& backend,
                              const std::vector<SkillDefinition>& skills,
                              std::vector<std::int64_t> frame_indices = {}) {
  PlannerRequest req{build_prompt(skills), build_schema(skills), std::move(frame_indices)};
  return expand_plan(parse_plan(backend.generate(req), skills), skills);
}

}  // namespace salient
