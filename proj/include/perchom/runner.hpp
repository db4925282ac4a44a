#pragma once

#include <string>
#include <vector>

#include "perchom/config.hpp"

namespace perchom {

struct RunManifest {
    std::string config_echo;
    std::string version;
    std::vector<std::pair<std::string, std::uint64_t>> artifacts; // path, fnv1a64
    std::vector<std::pair<std::string, double>> stage_seconds;
};

// Dispatch an experiment config: writes CSVs, field files and SVG plots into
// config.out_dir, then the manifest (atomically, last). Deterministic output
// bytes for a fixed config; the manifest carries wall-clock times.
RunManifest run(const ExperimentConfig& config);

// Built-in presets: "figure1", "figure2", "smoke".
RunManifest run_preset(const std::string& name, const std::string& out_dir);

int thread_budget(); // PERCHOM_THREADS cap, else hardware concurrency

} // namespace perchom
