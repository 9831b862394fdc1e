#include "coenv/config.hpp"

#include <functional>
#include <map>

namespace coenv {

namespace {

// One table per section keeps the field list next to its JSON spelling, so
// config_to_json and apply_config_overrides can never drift apart.
template <typename T>
struct Field {
  const char* name;
  std::function<double(const T&)> get;
  std::function<void(T&, double)> set;
};

template <typename T>
std::vector<Field<T>> fields();

template <>
std::vector<Field<WorldConfig>> fields<WorldConfig>() {
  using W = WorldConfig;
  return {
      {"max_joint_step", [](const W& w) { return w.max_joint_step; },
       [](W& w, double v) { w.max_joint_step = v; }},
      {"grasp_capture_tol", [](const W& w) { return w.grasp_capture_tol; },
       [](W& w, double v) { w.grasp_capture_tol = v; }},
      {"snap_tol", [](const W& w) { return w.snap_tol; },
       [](W& w, double v) { w.snap_tol = v; }},
      {"drop_tol", [](const W& w) { return w.drop_tol; },
       [](W& w, double v) { w.drop_tol = v; }},
      {"contact_touch_tol", [](const W& w) { return w.contact_touch_tol; },
       [](W& w, double v) { w.contact_touch_tol = v; }},
      {"contact_release_tol", [](const W& w) { return w.contact_release_tol; },
       [](W& w, double v) { w.contact_release_tol = v; }},
      {"container_insert_tol", [](const W& w) { return w.container_insert_tol; },
       [](W& w, double v) { w.container_insert_tol = v; }},
      {"max_steps_per_primitive",
       [](const W& w) { return static_cast<double>(w.max_steps_per_primitive); },
       [](W& w, double v) { w.max_steps_per_primitive = static_cast<int>(v); }},
  };
}

template <>
std::vector<Field<IkOptions>> fields<IkOptions>() {
  using I = IkOptions;
  return {
      {"lambda", [](const I& i) { return i.lambda; },
       [](I& i, double v) { i.lambda = v; }},
      {"max_iters", [](const I& i) { return static_cast<double>(i.max_iters); },
       [](I& i, double v) { i.max_iters = static_cast<int>(v); }},
      {"pos_tol", [](const I& i) { return i.pos_tol; },
       [](I& i, double v) { i.pos_tol = v; }},
      {"rot_tol", [](const I& i) { return i.rot_tol; },
       [](I& i, double v) { i.rot_tol = v; }},
      {"restarts", [](const I& i) { return static_cast<double>(i.restarts); },
       [](I& i, double v) { i.restarts = static_cast<int>(v); }},
  };
}

template <>
std::vector<Field<InteractiveConfig>> fields<InteractiveConfig>() {
  using C = InteractiveConfig;
  return {
      {"pos_check_tol", [](const C& c) { return c.pos_check_tol; },
       [](C& c, double v) { c.pos_check_tol = v; }},
      {"rot_check_tol", [](const C& c) { return c.rot_check_tol; },
       [](C& c, double v) { c.rot_check_tol = v; }},
      {"stuck_window", [](const C& c) { return static_cast<double>(c.stuck_window); },
       [](C& c, double v) { c.stuck_window = static_cast<int>(v); }},
      {"stuck_eps", [](const C& c) { return c.stuck_eps; },
       [](C& c, double v) { c.stuck_eps = v; }},
      {"max_corrections_per_element",
       [](const C& c) { return static_cast<double>(c.max_corrections_per_element); },
       [](C& c, double v) { c.max_corrections_per_element = static_cast<int>(v); }},
      {"max_replans", [](const C& c) { return static_cast<double>(c.max_replans); },
       [](C& c, double v) { c.max_replans = static_cast<int>(v); }},
      {"j_max", [](const C& c) { return static_cast<double>(c.j_max); },
       [](C& c, double v) { c.j_max = static_cast<int>(v); }},
      {"drift_correct_max", [](const C& c) { return c.drift_correct_max; },
       [](C& c, double v) { c.drift_correct_max = v; }},
  };
}

template <>
std::vector<Field<IterativeConfig>> fields<IterativeConfig>() {
  using C = IterativeConfig;
  return {
      {"m_max", [](const C& c) { return static_cast<double>(c.m_max); },
       [](C& c, double v) { c.m_max = static_cast<int>(v); }},
      {"step_budget", [](const C& c) { return static_cast<double>(c.step_budget); },
       [](C& c, double v) { c.step_budget = static_cast<long>(v); }},
      {"wall_budget_s", [](const C& c) { return c.wall_budget_s; },
       [](C& c, double v) { c.wall_budget_s = v; }},
  };
}

template <>
std::vector<Field<TransferConfig>> fields<TransferConfig>() {
  using C = TransferConfig;
  return {
      {"steps", [](const C& c) { return static_cast<double>(c.steps); },
       [](C& c, double v) { c.steps = static_cast<int>(v); }},
      {"margin", [](const C& c) { return c.margin; },
       [](C& c, double v) { c.margin = v; }},
  };
}

template <>
std::vector<Field<FusionOptions>> fields<FusionOptions>() {
  using C = FusionOptions;
  return {
      {"confidence_weighted",
       [](const C& c) { return c.confidence_weighted ? 1.0 : 0.0; },
       [](C& c, double v) { c.confidence_weighted = v != 0.0; }},
      {"trim_outliers", [](const C& c) { return c.trim_outliers ? 1.0 : 0.0; },
       [](C& c, double v) { c.trim_outliers = v != 0.0; }},
  };
}

template <typename T>
void apply_section(T& section, const Json& j, const std::string& name) {
  if (!j.is_object()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "config: section '" + name + "' must be an object");
  }
  auto table = fields<T>();
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool found = false;
    for (const auto& f : table) {
      if (it.key() == f.name) {
        if (!it.value().is_number() && !it.value().is_boolean()) {
          throw EngineError(EngineError::Kind::SerializationError,
                            "config: " + name + "." + it.key() +
                                " must be numeric");
        }
        f.set(section, it.value().is_boolean()
                           ? (it.value().get<bool>() ? 1.0 : 0.0)
                           : it.value().get<double>());
        found = true;
        break;
      }
    }
    if (!found) {
      throw EngineError(EngineError::Kind::SerializationError,
                        "config: unknown key '" + name + "." + it.key() + "'");
    }
  }
}

template <typename T>
Json section_to_json(const T& section) {
  Json j = Json::object();
  for (const auto& f : fields<T>()) j[f.name] = f.get(section);
  return j;
}

}  // namespace

EngineConfig apply_config_overrides(EngineConfig base, const Json& overrides) {
  if (!overrides.is_object()) {
    throw EngineError(EngineError::Kind::SerializationError,
                      "config: overrides must be a JSON object");
  }
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const std::string& key = it.key();
    if (key == "schema") continue;
    if (key == "world") {
      apply_section(base.world, it.value(), key);
    } else if (key == "ik") {
      apply_section(base.ik, it.value(), key);
    } else if (key == "interactive") {
      apply_section(base.interactive, it.value(), key);
    } else if (key == "iterative") {
      apply_section(base.iterative, it.value(), key);
    } else if (key == "transfer") {
      apply_section(base.transfer, it.value(), key);
    } else if (key == "fusion") {
      apply_section(base.fusion, it.value(), key);
    } else {
      throw EngineError(EngineError::Kind::SerializationError,
                        "config: unknown section '" + key + "'");
    }
  }
  return base;
}

EngineConfig load_config_file(const std::string& path) {
  Json j = parse_json(read_text_file(path), path);
  return apply_config_overrides(EngineConfig{}, j);
}

Json config_to_json(const EngineConfig& cfg) {
  return Json{{"world", section_to_json(cfg.world)},
              {"ik", section_to_json(cfg.ik)},
              {"interactive", section_to_json(cfg.interactive)},
              {"iterative", section_to_json(cfg.iterative)},
              {"transfer", section_to_json(cfg.transfer)},
              {"fusion", section_to_json(cfg.fusion)}};
}

}  // namespace coenv
