// End-to-end subprocess checks of the fspn binary (path passed as argv[1]).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "fspn/synth.hpp"

namespace fs = std::filesystem;
using namespace fspn;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
    if (ok) {
        std::cout << "ok: " << what << "\n";
    } else {
        std::cout << "FAILED: " << what << "\n";
        ++failures;
    }
}

int run(const std::string& cmd) {
    int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b) {
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        fs::path rel = fs::relative(e.path(), a);
        if (!fs::exists(b / rel)) return false;
        if (slurp(e.path()) != slurp(b / rel)) return false;
    }
    return true;
}

ScenarioConfig small_scenario() {
    ScenarioConfig sc = synth::default_scenario(5);
    sc.machines.resize(4);
    for (size_t i = 0; i < sc.machines.size(); ++i) {
        auto& m = sc.machines[i];
        m.sample_count = 12;
        m.archetype_id = static_cast<int>(i % 2);
        m.vibration_scale = m.archetype_id == 0 ? 1.0 : 2.5;
        m.fault_rates = {{kBearing, 0.25}};
    }
    return sc;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: test_cli <path-to-fspn>\n";
        return 2;
    }
    const std::string bin = argv[1];
    fs::path root = fs::temp_directory_path() / "fspn_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    fs::path cfg = root / "scenario.json";
    synth::save_scenario_json(cfg.string(), small_scenario());

    std::string base = bin + " synth --config " + cfg.string();

    // synth end-to-end
    check(run(base + " --out " + (root / "a").string()) == 0, "synth exits 0");
    check(fs::exists(root / "a/data/machine_1.fspn"), "synth writes dataset");
    check(fs::exists(root / "a/synth_manifest.json"), "synth writes manifest");

    // idempotence: same config + seed -> identical bytes
    check(run(base + " --out " + (root / "b").string()) == 0, "synth rerun");
    check(same_tree(root / "a", root / "b"), "identical reruns byte-for-byte");

    // missing scenario file -> nonzero, no partial outputs
    check(run(bin + " synth --config " + (root / "missing.json").string() +
              " --out " + (root / "c").string()) != 0,
          "missing scenario fails");
    check(!fs::exists(root / "c/data/machine_1.fspn"),
          "no partial dataset on failure");

    // cluster
    std::string cl = bin + " cluster --config " + cfg.string() + " --data " +
                     (root / "a/data").string() + " --out " +
                     (root / "cl").string();
    check(run(cl) == 0, "cluster exits 0");
    check(fs::exists(root / "cl/centroids.json"), "cluster exports centroids");
    check(fs::exists(root / "cl/groups.json"), "cluster exports groups");

    // train
    std::string tr = bin + " train --config " + cfg.string() + " --data " +
                     (root / "a/data").string() + " --groups " +
                     (root / "cl/groups.json").string() +
                     " --rounds 2 --epochs 1 --out " + (root / "tr").string();
    check(run(tr) == 0, "train exits 0");
    check(fs::exists(root / "tr/w_global.ckpt"), "train writes global weights");
    check(fs::exists(root / "tr/theta_group0.ckpt") &&
              fs::exists(root / "tr/theta_group1.ckpt"),
          "train writes per-group heads");
    check(fs::exists(root / "tr/round_log.csv"), "train writes round log");

    // evaluate
    std::string ev = bin + " evaluate --config " + cfg.string() + " --data " +
                     (root / "a/data").string() + " --groups " +
                     (root / "cl/groups.json").string() +
                     " --rounds 2 --epochs 1 --folds 3 --out " +
                     (root / "ev").string();
    check(run(ev) == 0, "evaluate exits 0");
    check(fs::exists(root / "ev/results_personalized.csv"),
          "evaluate writes results");

    // assign against the exported centroids
    std::string as = bin + " assign --config " + cfg.string() + " --data " +
                     (root / "a/data").string() + " --centroids " +
                     (root / "cl/centroids.json").string();
    check(run(as) == 0, "assign exits 0");

    if (failures == 0) fs::remove_all(root);
    std::cout << (failures == 0 ? "all cli checks passed\n"
                                : "cli checks FAILED\n");
    return failures == 0 ? 0 : 1;
}
