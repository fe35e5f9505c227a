#include "fspn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

#include "fspn/fft.hpp"
#include "fspn/rng.hpp"
#include "json.hpp"

namespace fspn {
namespace synth {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Bearing characteristic order: non-synchronous so impacts never land on a
// kX index bin.
constexpr double kBearingOrder = 3.58;

// Baseline signal composition per archetype. Distinct harmonic ratios and
// impact ring placement keep archetypes separable in index space.
struct ArchetypeTraits {
    double amp_1x;       // 1X amplitude relative to vibration_scale
    double amp_2x;
    double amp_3x;
    double ring_rel;     // bearing ring frequency as a fraction of fs
    double noise_shape;  // extra multiplier on the noise floor
};

ArchetypeTraits archetype_traits(int archetype_id) {
    switch (archetype_id % 2) {
        case 0:
            return {1.00, 0.12, 0.05, 0.20, 1.0};
        default:
            return {0.65, 0.45, 0.18, 0.14, 1.2};
    }
}

}  // namespace

void validate(const ScenarioConfig& config) {
    if (config.machines.empty())
        throw ConfigError("scenario has no machines");
    if (config.channels.empty())
        throw ConfigError("scenario has no channels");
    if (config.fault_types <= 0)
        throw ConfigError("fault_types must be positive");
    std::vector<int> ids;
    for (const auto& m : config.machines) {
        ids.push_back(m.machine_id);
        if (m.sample_count <= 0)
            throw ConfigError("machine " + std::to_string(m.machine_id) +
                              ": sample_count must be positive");
        if (m.rotating_freq <= 0)
            throw ConfigError("machine " + std::to_string(m.machine_id) +
                              ": rotating_freq must be positive");
        for (const auto& [fault, rate] : m.fault_rates) {
            if (fault < 0 || fault >= config.fault_types)
                throw ConfigError("machine " + std::to_string(m.machine_id) +
                                  ": unknown fault type " + std::to_string(fault));
            if (rate < 0.0 || rate >= 1.0)
                throw ConfigError("machine " + std::to_string(m.machine_id) +
                                  ": fault rate out of [0,1)");
        }
        for (const auto& c : config.channels) {
            // highest synthesized frequency: the bearing ring at ring_rel*fs,
            // and the 5X harmonic band used by the indices
            double ring = archetype_traits(m.archetype_id).ring_rel * c.sampling_rate;
            double top = std::max(ring, 5.0 * m.rotating_freq);
            if (c.sampling_rate <= 2.0 * top)
                throw ConfigError("channel " + std::to_string(c.channel_id) +
                                  ": sampling_rate must exceed twice the highest "
                                  "synthesized frequency");
        }
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ConfigError("duplicate machine ids");
    for (const auto& c : config.channels) {
        if (!is_power_of_two(static_cast<size_t>(c.length)))
            throw ConfigError("channel " + std::to_string(c.channel_id) +
                              ": length must be a power of two");
        if (c.sampling_rate <= 0)
            throw ConfigError("channel sampling_rate must be positive");
    }
}

std::vector<std::vector<uint8_t>> generate_labels(const MachineSpec& spec,
                                                  int fault_types,
                                                  uint64_t seed) {
    const int n = spec.sample_count;
    std::vector<std::vector<uint8_t>> labels(
        n, std::vector<uint8_t>(static_cast<size_t>(fault_types), 0));
    for (const auto& [fault, rate] : spec.fault_rates) {
        int n_pos = static_cast<int>(std::lround(rate * n));
        if (n_pos <= 0) continue;
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, 0x1abe15, static_cast<uint64_t>(fault)));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.below(static_cast<uint64_t>(i + 1))]);
        for (int i = 0; i < n_pos; ++i) labels[order[i]][fault] = 1;
    }
    return labels;
}

VibrationRecord synthesize_record(const MachineSpec& spec,
                                  const std::vector<ChannelConfig>& channels,
                                  const std::vector<uint8_t>& labels,
                                  uint64_t seed) {
    const ArchetypeTraits traits = archetype_traits(spec.archetype_id);
    const double f1 = spec.rotating_freq;

    Rng rec_rng(derive_seed(seed, 0x5e7e17));
    // per-record severity jitter, shared across channels
    const double severity = std::exp(0.12 * rec_rng.normal());
    const double scale = spec.vibration_scale * severity;

    const bool unbalance = labels.size() > kUnbalance && labels[kUnbalance];
    const bool misalign = labels.size() > kMisalignment && labels[kMisalignment];
    const bool bearing = labels.size() > kBearing && labels[kBearing];
    const bool friction = labels.size() > kFriction && labels[kFriction];

    double amp_1x = scale * traits.amp_1x;
    double amp_2x = scale * traits.amp_2x;
    double amp_3x = scale * traits.amp_3x;
    double amp_half = 0.0;
    double noise_mult = traits.noise_shape;

    if (unbalance) amp_1x *= 3.2 * std::exp(0.08 * rec_rng.normal());
    if (misalign) {
        amp_2x += scale * 1.30 * std::exp(0.10 * rec_rng.normal());
        amp_3x += scale * 1.05 * std::exp(0.10 * rec_rng.normal());
    }
    if (friction) {
        amp_half = scale * 0.80 * std::exp(0.10 * rec_rng.normal());
        noise_mult *= 3.0;
    }
    const double impact_amp =
        bearing ? scale * 2.8 * std::exp(0.10 * rec_rng.normal()) : 0.0;
    const double bearing_freq = kBearingOrder * f1;
    const double bearing_phase = rec_rng.uniform();  // impact train offset

    VibrationRecord rec;
    rec.machine_id = spec.machine_id;
    rec.rotating_freq = f1;
    rec.labels = labels;
    rec.channels.reserve(channels.size());

    for (const auto& ch : channels) {
        Rng rng(derive_seed(seed, 0xc4a27e1, static_cast<uint64_t>(ch.channel_id)));
        const double fs = ch.sampling_rate;
        const double p1 = kTwoPi * rng.uniform();
        const double p2 = kTwoPi * rng.uniform();
        const double p3 = kTwoPi * rng.uniform();
        const double ph = kTwoPi * rng.uniform();
        const double f_ring = traits.ring_rel * fs;
        const double tau = 0.8 / bearing_freq;  // impacts decay before the next

        std::vector<float> x(static_cast<size_t>(ch.length));
        const double sigma = spec.noise_level * scale * noise_mult;
        for (int n = 0; n < ch.length; ++n) {
            const double t = n / fs;
            double s = amp_1x * std::sin(kTwoPi * f1 * t + p1) +
                       amp_2x * std::sin(kTwoPi * 2.0 * f1 * t + p2) +
                       amp_3x * std::sin(kTwoPi * 3.0 * f1 * t + p3);
            if (amp_half > 0.0)
                s += amp_half * std::sin(kTwoPi * 0.5 * f1 * t + ph);
            if (impact_amp > 0.0) {
                // most recent impact at or before t
                double k = std::floor(t * bearing_freq + bearing_phase);
                double t_imp = (k - bearing_phase) / bearing_freq;
                double dt = t - t_imp;
                if (dt >= 0.0)
                    s += impact_amp * std::exp(-dt / tau) *
                         std::sin(kTwoPi * f_ring * dt);
            }
            s += sigma * rng.normal();
            x[static_cast<size_t>(n)] = static_cast<float>(s);
        }
        rec.channels.push_back(std::move(x));
    }
    return rec;
}

Dataset generate_scenario(const ScenarioConfig& config) {
    validate(config);
    Dataset out;
    for (const auto& spec : config.machines) {
        uint64_t machine_seed =
            derive_seed(config.master_seed, 0xfac7, static_cast<uint64_t>(spec.machine_id));
        auto labels = generate_labels(spec, config.fault_types, machine_seed);
        std::vector<VibrationRecord> records;
        records.reserve(static_cast<size_t>(spec.sample_count));
        for (int i = 0; i < spec.sample_count; ++i) {
            uint64_t rec_seed =
                derive_seed(machine_seed, 0x2ec, static_cast<uint64_t>(i));
            records.push_back(
                synthesize_record(spec, config.channels, labels[i], rec_seed));
        }
        out.emplace(spec.machine_id, std::move(records));
    }
    return out;
}

ScenarioConfig default_scenario(uint64_t master_seed) {
    ScenarioConfig cfg;
    cfg.master_seed = master_seed;
    cfg.fault_types = kDefaultFaultTypes;
    cfg.channels = {
        {0, ChannelKind::velocity, 2000.0, 1024},
        {1, ChannelKind::acceleration, 4000.0, 1024},
        {2, ChannelKind::acceleration, 8000.0, 1024},
    };

    // 13 machines across 3 factories; archetype 0 holds the smaller pumps,
    // archetype 1 the large ones. Fault rates follow the fleet layout; sample
    // counts are scaled to keep from-scratch training fast.
    auto mk = [](int id, int factory, int arch, double vib, int n,
                 std::map<int, double> rates) {
        MachineSpec m;
        m.machine_id = id;
        m.factory_id = factory;
        m.archetype_id = arch;
        m.rotating_freq = 50.0;
        m.vibration_scale = vib;
        m.sample_count = n;
        m.fault_rates = std::move(rates);
        m.noise_level = 0.25;
        return m;
    };
    cfg.machines = {
        mk(1, 0, 0, 1.0, 127, {{kBearing, 0.028}, {kFriction, 0.217}}),
        mk(2, 0, 0, 1.0, 242, {{kFriction, 0.829}}),
        mk(3, 0, 1, 2.5, 30, {}),
        mk(4, 0, 1, 2.5, 114, {{kBearing, 0.115}}),
        mk(5, 0, 1, 2.5, 102, {{kBearing, 0.035}}),
        mk(6, 1, 0, 1.3, 106, {{kFriction, 0.519}}),
        mk(7, 1, 0, 1.3, 71, {{kFriction, 0.051}}),
        mk(8, 1, 0, 1.0, 82, {{kBearing, 0.015}, {kFriction, 0.248}}),
        mk(9, 1, 1, 2.5, 185,
           {{kUnbalance, 0.045}, {kMisalignment, 0.455}, {kBearing, 0.123}}),
        mk(10, 1, 1, 2.5, 106, {{kBearing, 0.023}}),
        mk(11, 2, 0, 1.3, 87, {{kFriction, 0.317}}),
        mk(12, 2, 0, 1.3, 102,
           {{kMisalignment, 0.059}, {kBearing, 0.065}, {kFriction, 0.371}}),
        mk(13, 2, 1, 2.5, 236, {{kUnbalance, 0.325}, {kBearing, 0.488}}),
    };
    return cfg;
}

// ---------------------------------------------------------------------------
// file formats

using nlohmann::json;

ScenarioConfig load_scenario_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file " + path);
    json j = json::parse(in);
    ScenarioConfig cfg;
    cfg.master_seed = j.at("master_seed").get<uint64_t>();
    cfg.fault_types = j.at("fault_types").get<int>();
    for (const auto& jc : j.at("channels")) {
        ChannelConfig c;
        c.channel_id = jc.at("channel_id").get<int>();
        c.kind = jc.at("kind").get<std::string>() == "velocity"
                     ? ChannelKind::velocity
                     : ChannelKind::acceleration;
        c.sampling_rate = jc.at("sampling_rate").get<double>();
        c.length = jc.at("length").get<int>();
        cfg.channels.push_back(c);
    }
    for (const auto& jm : j.at("machines")) {
        MachineSpec m;
        m.machine_id = jm.at("machine_id").get<int>();
        m.factory_id = jm.at("factory_id").get<int>();
        m.archetype_id = jm.at("archetype_id").get<int>();
        m.rotating_freq = jm.at("rotating_freq").get<double>();
        m.vibration_scale = jm.at("vibration_scale").get<double>();
        m.sample_count = jm.at("sample_count").get<int>();
        m.noise_level = jm.at("noise_level").get<double>();
        for (const auto& [k, v] : jm.at("fault_rates").items())
            m.fault_rates[std::stoi(k)] = v.get<double>();
        cfg.machines.push_back(std::move(m));
    }
    validate(cfg);
    return cfg;
}

void save_scenario_json(const std::string& path, const ScenarioConfig& cfg) {
    json j;
    j["master_seed"] = cfg.master_seed;
    j["fault_types"] = cfg.fault_types;
    j["channels"] = json::array();
    for (const auto& c : cfg.channels) {
        j["channels"].push_back(
            {{"channel_id", c.channel_id},
             {"kind", c.kind == ChannelKind::velocity ? "velocity" : "acceleration"},
             {"sampling_rate", c.sampling_rate},
             {"length", c.length}});
    }
    j["machines"] = json::array();
    for (const auto& m : cfg.machines) {
        json rates = json::object();
        for (const auto& [k, v] : m.fault_rates) rates[std::to_string(k)] = v;
        j["machines"].push_back({{"machine_id", m.machine_id},
                                 {"factory_id", m.factory_id},
                                 {"archetype_id", m.archetype_id},
                                 {"rotating_freq", m.rotating_freq},
                                 {"vibration_scale", m.vibration_scale},
                                 {"sample_count", m.sample_count},
                                 {"noise_level", m.noise_level},
                                 {"fault_rates", rates}});
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write scenario file " + path);
    out << j.dump(2) << "\n";
}

namespace {
constexpr char kDataMagic[5] = {'F', 'S', 'P', 'N', '1'};

std::string machine_data_path(const std::string& dir, int machine_id) {
    return dir + "/machine_" + std::to_string(machine_id) + ".fspn";
}
std::string machine_manifest_path(const std::string& dir, int machine_id) {
    return dir + "/machine_" + std::to_string(machine_id) + ".labels.json";
}
}  // namespace

void save_dataset(const std::string& dir, const ScenarioConfig& config,
                  const Dataset& data) {
    std::filesystem::create_directories(dir);
    for (const auto& [machine_id, records] : data) {
        std::string path = machine_data_path(dir, machine_id);
        std::FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw DataError("cannot write " + path);
        std::fwrite(kDataMagic, 1, sizeof(kDataMagic), f);
        uint32_t nch = static_cast<uint32_t>(config.channels.size());
        std::fwrite(&nch, sizeof(nch), 1, f);
        for (const auto& c : config.channels) {
            uint32_t len = static_cast<uint32_t>(c.length);
            std::fwrite(&len, sizeof(len), 1, f);
        }
        uint32_t nrec = static_cast<uint32_t>(records.size());
        uint32_t nfault = static_cast<uint32_t>(config.fault_types);
        std::fwrite(&nrec, sizeof(nrec), 1, f);
        std::fwrite(&nfault, sizeof(nfault), 1, f);
        for (const auto& rec : records)
            for (const auto& ch : rec.channels)
                std::fwrite(ch.data(), sizeof(float), ch.size(), f);
        std::fclose(f);

        json manifest;
        manifest["machine_id"] = machine_id;
        manifest["rotating_freq"] =
            records.empty() ? 0.0 : records.front().rotating_freq;
        manifest["labels"] = json::array();
        for (const auto& rec : records) {
            json l = json::array();
            for (uint8_t b : rec.labels) l.push_back(static_cast<int>(b));
            manifest["labels"].push_back(l);
        }
        std::ofstream mo(machine_manifest_path(dir, machine_id));
        mo << manifest.dump() << "\n";
    }
}

Dataset load_dataset(const std::string& dir, const ScenarioConfig& config) {
    Dataset out;
    for (const auto& spec : config.machines) {
        std::string path = machine_data_path(dir, spec.machine_id);
        std::FILE* f = std::fopen(path.c_str(), "rb");
        if (!f) throw DataError("cannot open " + path);
        char magic[5];
        if (std::fread(magic, 1, 5, f) != 5 ||
            std::memcmp(magic, kDataMagic, 5) != 0) {
            std::fclose(f);
            throw DataError(path + " is not a dataset file");
        }
        uint32_t nch = 0, nrec = 0, nfault = 0;
        std::fread(&nch, sizeof(nch), 1, f);
        std::vector<uint32_t> lens(nch);
        for (auto& l : lens) std::fread(&l, sizeof(l), 1, f);
        std::fread(&nrec, sizeof(nrec), 1, f);
        std::fread(&nfault, sizeof(nfault), 1, f);
        if (nch != config.channels.size() ||
            nfault != static_cast<uint32_t>(config.fault_types)) {
            std::fclose(f);
            throw DataError(path + " does not match the scenario layout");
        }

        std::ifstream mi(machine_manifest_path(dir, spec.machine_id));
        if (!mi) {
            std::fclose(f);
            throw DataError("missing label manifest for machine " +
                            std::to_string(spec.machine_id));
        }
        json manifest = json::parse(mi);
        double rot = manifest.at("rotating_freq").get<double>();
        const auto& jl = manifest.at("labels");

        std::vector<VibrationRecord> records(nrec);
        for (uint32_t i = 0; i < nrec; ++i) {
            VibrationRecord& rec = records[i];
            rec.machine_id = spec.machine_id;
            rec.rotating_freq = rot;
            rec.channels.resize(nch);
            for (uint32_t c = 0; c < nch; ++c) {
                rec.channels[c].resize(lens[c]);
                if (std::fread(rec.channels[c].data(), sizeof(float), lens[c], f) !=
                    lens[c]) {
                    std::fclose(f);
                    throw DataError(path + " truncated");
                }
            }
            for (const auto& b : jl.at(i)) rec.labels.push_back(b.get<int>() ? 1 : 0);
        }
        std::fclose(f);
        out.emplace(spec.machine_id, std::move(records));
    }
    return out;
}

}  // namespace synth
}  // namespace fspn
