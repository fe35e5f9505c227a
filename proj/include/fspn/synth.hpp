#pragma once

#include <string>

#include "fspn/data.hpp"

namespace fspn {
namespace synth {

// Throws ConfigError on invalid scenarios (zero machines, non-power-of-two
// channel length, out-of-range fault rates, duplicate machine ids, ...).
void validate(const ScenarioConfig& config);

// Exact-count label assignment: per fault, exactly round(rate * sample_count)
// records are positive; placement is a seeded shuffle, independent per fault
// so faults can co-occur.
std::vector<std::vector<uint8_t>> generate_labels(const MachineSpec& spec,
                                                  int fault_types,
                                                  uint64_t seed);

VibrationRecord synthesize_record(const MachineSpec& spec,
                                  const std::vector<ChannelConfig>& channels,
                                  const std::vector<uint8_t>& labels,
                                  uint64_t seed);

Dataset generate_scenario(const ScenarioConfig& config);

// The 13-machine, 3-factory, 2-archetype scenario mirroring the default
// fleet layout (fault rates and relative sample counts per machine).
ScenarioConfig default_scenario(uint64_t master_seed);

// JSON scenario files and the per-machine binary dataset format
// (magic "FSPN1" + header + little-endian f32 samples, labels in a JSON
// sidecar manifest).
ScenarioConfig load_scenario_json(const std::string& path);
void save_scenario_json(const std::string& path, const ScenarioConfig& config);
void save_dataset(const std::string& dir, const ScenarioConfig& config,
                  const Dataset& data);
Dataset load_dataset(const std::string& dir, const ScenarioConfig& config);

}  // namespace synth
}  // namespace fspn
