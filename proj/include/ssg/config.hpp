#pragma once

#include <string>
#include <vector>

#include "ssg/trainer.hpp"

namespace ssg {

// Strict JSON config: unknown keys are rejected, `--set k=v` overrides apply
// last (last one wins). An empty object resolves to the documented defaults.
ExperimentConfig parse_config_file(const std::string& path,
                                   const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config_text(const std::string& json_text,
                                   const std::vector<std::string>& overrides = {});

// Canonical dump of a resolved config; re-parseable and byte-stable, written
// into every run directory.
std::string resolved_config_json(const ExperimentConfig& config);

}  // namespace ssg
