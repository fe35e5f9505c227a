#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace fspn {

// Fault type indices used throughout the framework.
enum Fault : int { kUnbalance = 0, kMisalignment = 1, kBearing = 2, kFriction = 3 };
constexpr int kDefaultFaultTypes = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MachineSpec {
    int machine_id = 0;
    int factory_id = 0;
    int archetype_id = 0;  // ground-truth similar-machine group
    double rotating_freq = 50.0;
    double vibration_scale = 1.0;
    int sample_count = 0;
    std::map<int, double> fault_rates;  // fault type -> fraction in [0,1)
    double noise_level = 0.25;
};

enum class ChannelKind : uint8_t { velocity = 0, acceleration = 1 };

struct ChannelConfig {
    int channel_id = 0;
    ChannelKind kind = ChannelKind::acceleration;
    double sampling_rate = 8000.0;
    int length = 1024;
};

struct VibrationRecord {
    int machine_id = 0;
    std::vector<std::vector<float>> channels;
    double rotating_freq = 50.0;
    std::vector<uint8_t> labels;  // one 0/1 per fault type

    bool healthy() const {
        for (uint8_t l : labels)
            if (l) return false;
        return true;
    }
};

struct ScenarioConfig {
    std::vector<MachineSpec> machines;
    std::vector<ChannelConfig> channels;
    int fault_types = kDefaultFaultTypes;
    uint64_t master_seed = 0;
};

using Dataset = std::map<int, std::vector<VibrationRecord>>;  // machine_id -> records

}  // namespace fspn
