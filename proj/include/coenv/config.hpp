#pragma once

// Engine-wide configuration: every tolerance and budget in one value,
// overridable from a JSON config file and from CLI flags.

#include "coenv/fusion.hpp"
#include "coenv/interactive.hpp"
#include "coenv/iterative.hpp"
#include "coenv/transfer.hpp"

#include <string>

namespace coenv {

struct EngineConfig {
  WorldConfig world;
  IkOptions ik;
  InteractiveConfig interactive;
  IterativeConfig iterative;
  TransferConfig transfer;
  FusionOptions fusion;
};

/// Applies overrides from a JSON object: top-level keys "world", "ik",
/// "interactive", "iterative", "transfer", "fusion", each an object whose
/// entries name the corresponding struct fields (snake_case).  Unknown keys
/// raise SerializationError so typos never pass silently.
EngineConfig apply_config_overrides(EngineConfig base, const Json& overrides);

EngineConfig load_config_file(const std::string& path);

Json config_to_json(const EngineConfig& cfg);

}  // namespace coenv
