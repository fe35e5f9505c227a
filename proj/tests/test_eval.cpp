#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fspn/eval.hpp"
#include "fspn/synth.hpp"

using namespace fspn;

namespace {

// label-only dataset for fold-plan tests
Dataset label_dataset(const std::vector<std::vector<std::vector<uint8_t>>>& by_machine) {
    Dataset d;
    for (size_t m = 0; m < by_machine.size(); ++m) {
        auto& recs = d[static_cast<int>(m + 1)];
        for (const auto& l : by_machine[m]) {
            VibrationRecord r;
            r.machine_id = static_cast<int>(m + 1);
            r.labels = l;
            recs.push_back(std::move(r));
        }
    }
    return d;
}

ScenarioConfig micro_scenario(uint64_t seed) {
    ScenarioConfig sc = synth::default_scenario(seed);
    sc.machines.resize(2);
    sc.machines[0].sample_count = 12;
    sc.machines[0].fault_rates = {{kBearing, 0.5}};
    sc.machines[1].sample_count = 12;
    sc.machines[1].fault_rates = {{kBearing, 0.5}};
    return sc;
}

}  // namespace

TEST_CASE("fold plan: disjoint cover with near-even positive split") {
    std::vector<std::vector<std::vector<uint8_t>>> machines(2);
    Rng rng(3);
    for (auto& m : machines)
        for (int i = 0; i < 40; ++i)
            m.push_back({static_cast<uint8_t>(rng.below(2)),
                         static_cast<uint8_t>(i < 10 ? 1 : 0)});
    Dataset d = label_dataset(machines);
    eval::FoldPlan plan = eval::make_folds(d, 5, 17);
    CHECK(plan.n_folds == 5);

    for (const auto& [mid, folds] : plan.folds) {
        REQUIRE(folds.size() == 5);
        std::set<int> seen;
        const auto& recs = d.at(mid);
        for (const auto& fold : folds)
            for (int idx : fold) {
                CHECK(seen.insert(idx).second);  // disjoint
                CHECK(idx >= 0);
                CHECK(idx < static_cast<int>(recs.size()));
            }
        CHECK(seen.size() == recs.size());  // complete

        // per fault, fold positive counts within +-1 of each other
        for (int fault = 0; fault < 2; ++fault) {
            std::vector<int> counts;
            for (const auto& fold : folds) {
                int c = 0;
                for (int idx : fold)
                    if (recs[static_cast<size_t>(idx)].labels[static_cast<size_t>(fault)])
                        ++c;
                counts.push_back(c);
            }
            int lo = *std::min_element(counts.begin(), counts.end());
            int hi = *std::max_element(counts.begin(), counts.end());
            CHECK(hi - lo <= 1);
        }
        // fold sizes near-even too
        std::vector<size_t> sizes;
        for (const auto& fold : folds) sizes.push_back(fold.size());
        CHECK(*std::max_element(sizes.begin(), sizes.end()) -
                  *std::min_element(sizes.begin(), sizes.end()) <=
              2);
    }

    // deterministic
    eval::FoldPlan again = eval::make_folds(d, 5, 17);
    CHECK(again.folds == plan.folds);
}

TEST_CASE("fold plan rejects machines with fewer records than folds") {
    std::vector<std::vector<std::vector<uint8_t>>> machines(1);
    machines[0] = {{1}, {0}, {1}};
    Dataset d = label_dataset(machines);
    CHECK_THROWS_AS(eval::make_folds(d, 5, 1), DataError);
}

TEST_CASE("fault-rate band edges") {
    CHECK(eval::band_of(0.0) == 0);
    CHECK(eval::band_of(0.049) == 0);
    CHECK(eval::band_of(0.05) == 1);
    CHECK(eval::band_of(0.149) == 1);
    CHECK(eval::band_of(0.15) == 2);
    CHECK(eval::band_of(0.299) == 2);
    CHECK(eval::band_of(0.30) == 3);
    CHECK(eval::band_of(0.499) == 3);
    CHECK(eval::band_of(0.50) == 4);
    CHECK(eval::band_of(0.9) == 4);
    for (int b = 0; b < eval::kNumBands; ++b)
        CHECK_FALSE(eval::band_name(b).empty());
}

TEST_CASE("fault summaries and band tables recompute from the rows") {
    eval::ResultTable t;
    t.rows = {{"m", 0, 1, 0, 0.8, 0, 0, 0, 2},
              {"m", 1, 1, 0, 0.6, 0, 0, 0, 2},
              {"m", 0, 2, 1, 0.4, 0, 0, 0, 1}};
    auto sum = eval::fault_type_summary({&t});
    REQUIRE(sum.size() == 2);
    for (const auto& row : sum) {
        if (row.fault == 0) {
            CHECK(row.mean_f1 == doctest::Approx(0.7));
            CHECK(row.n_rows == 2);
        } else {
            CHECK(row.mean_f1 == doctest::Approx(0.4));
            CHECK(row.n_rows == 1);
        }
    }

    eval::FeatureTable ft;
    ft.n_faults = 2;
    // machine 1: fault 0 at 10% (band 1); machine 2: fault 1 at 40% (band 3)
    for (int i = 0; i < 10; ++i)
        ft.labels[1].push_back({static_cast<uint8_t>(i < 1), 0});
    for (int i = 0; i < 10; ++i)
        ft.labels[2].push_back({0, static_cast<uint8_t>(i < 4)});
    auto rates = eval::dataset_fault_rates(ft);
    CHECK(rates.at({1, 0}) == doctest::Approx(0.1));
    CHECK(rates.at({2, 1}) == doctest::Approx(0.4));
    CHECK(rates.count({1, 1}) == 0);

    auto bands = eval::fault_rate_bands({&t}, ft);
    REQUIRE(bands.size() == 2);
    for (const auto& row : bands) {
        if (row.band == 1) {
            CHECK(row.mean_f1 == doctest::Approx(0.7));
            CHECK(row.n_rows == 2);
        } else {
            CHECK(row.band == 3);
            CHECK(row.mean_f1 == doctest::Approx(0.4));
        }
    }
}

TEST_CASE("result csv: per-row lines plus recomputable aggregates") {
    namespace fs = std::filesystem;
    eval::ResultTable t;
    t.rows = {{"m", 0, 1, 0, 0.8, 0.9, 0.75, 0.85, 2},
              {"m", 1, 1, 0, 0.6, 0.7, 0.65, 0.55, 3}};
    fs::path path = fs::temp_directory_path() / "fspn_results.csv";
    eval::write_result_csv(path.string(), t);
    std::ifstream in(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);  // header + 2 rows + 1 aggregate
    CHECK(lines[0].rfind("method,", 0) == 0);
    CHECK(lines[3].rfind("aggregate,-1,1,0,0.700000", 0) == 0);
    CHECK(eval::mean_f1(t) == doctest::Approx(0.7));
    fs::remove(path);
}

TEST_CASE("assign_new_machine: majority vote through exported normalization") {
    fedclust::FederatedKmeansResult res;
    res.global.centroids = {{-1.0}, {1.0}};
    res.stats.mean = {10.0};
    res.stats.std = {2.0};
    // raw 13.0 -> normalized 1.5 (group 1); raw 7.0 -> -1.5 (group 0)
    CHECK(eval::assign_new_machine({{13.0}, {13.2}, {7.0}}, res) == 1);
    CHECK(eval::assign_new_machine({{7.0}, {6.8}, {13.0}}, res) == 0);
    CHECK_THROWS_AS(eval::assign_new_machine({}, res), DataError);
}

TEST_CASE("method runners: rows carry valid metrics on a micro scenario") {
    ScenarioConfig sc = micro_scenario(7);
    Dataset data = synth::generate_scenario(sc);
    dsp::FeatureProfile fprof;
    eval::FeatureTable features = eval::build_features(sc, data, fprof);
    eval::FoldPlan plan = eval::make_folds(data, 3, 5);

    eval::MethodConfig mc;
    mc.profile = model::desk_profile();
    mc.fed.max_rounds = 2;
    mc.fed.local_epochs = 1;
    mc.fed.batch_size = 8;
    mc.fed.seed = 13;

    std::map<int, int> groups;
    for (const auto& m : sc.machines) groups[m.machine_id] = 0;

    auto check_rows = [&](const eval::ResultTable& t, const char* method) {
        CHECK_FALSE(t.rows.empty());
        for (const auto& r : t.rows) {
            CHECK(r.method == method);
            CHECK(r.fold >= 0);
            CHECK(r.fold < 3);
            CHECK(r.fault == kBearing);  // the only present fault
            CHECK(r.test_positives >= 1);
            for (double v : {r.f1, r.accuracy, r.precision, r.recall}) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    };

    check_rows(eval::run_single_machine(sc, features, plan, mc),
               "single_machine");
    check_rows(eval::run_vanilla_fl(sc, features, plan, mc), "vanilla_fl");
    check_rows(eval::run_personalized_fl(sc, features, groups, 1, plan, mc),
               "personalized_fl");
    check_rows(eval::run_clustering_fl(sc, features, groups, 1, plan, mc),
               "clustering_fl");
}
