#include "fspn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "fspn/dsp.hpp"
#include "fspn/rng.hpp"
#include "fspn/synth.hpp"

namespace fspn {
namespace eval {

FoldPlan make_folds(const Dataset& data, int folds, uint64_t seed) {
    FoldPlan plan;
    plan.n_folds = folds;
    for (const auto& [machine_id, records] : data) {
        const int n = static_cast<int>(records.size());
        if (n < folds)
            throw DataError("machine " + std::to_string(machine_id) +
                            " has fewer records than folds");
        const int nt = records.empty() ? 0 : static_cast<int>(records[0].labels.size());

        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(seed, 0xf01d, static_cast<uint64_t>(machine_id)));
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[rng.below(static_cast<uint64_t>(i + 1))]);

        std::vector<int> total_pos(static_cast<size_t>(nt), 0);
        for (const auto& r : records)
            for (int i = 0; i < nt; ++i)
                if (r.labels[static_cast<size_t>(i)]) ++total_pos[static_cast<size_t>(i)];

        std::vector<std::vector<int>> fold_sets(static_cast<size_t>(folds));
        std::vector<int> fold_of(static_cast<size_t>(n), -1);
        std::vector<std::vector<int>> pos_in_fold(
            static_cast<size_t>(folds), std::vector<int>(static_cast<size_t>(nt), 0));

        // iterative stratification: rarest fault first, each record to the
        // fold with the largest remaining share for that fault
        std::vector<int> fault_order(static_cast<size_t>(nt));
        std::iota(fault_order.begin(), fault_order.end(), 0);
        std::sort(fault_order.begin(), fault_order.end(), [&](int a, int b) {
            return total_pos[static_cast<size_t>(a)] < total_pos[static_cast<size_t>(b)];
        });

        auto assign = [&](int rec, int fold) {
            fold_of[static_cast<size_t>(rec)] = fold;
            fold_sets[static_cast<size_t>(fold)].push_back(rec);
            for (int i = 0; i < nt; ++i)
                if (records[static_cast<size_t>(rec)].labels[static_cast<size_t>(i)])
                    ++pos_in_fold[static_cast<size_t>(fold)][static_cast<size_t>(i)];
        };

        for (int fi : fault_order) {
            if (total_pos[static_cast<size_t>(fi)] == 0) continue;
            for (int rec : order) {
                if (fold_of[static_cast<size_t>(rec)] >= 0) continue;
                if (!records[static_cast<size_t>(rec)].labels[static_cast<size_t>(fi)])
                    continue;
                double target =
                    static_cast<double>(total_pos[static_cast<size_t>(fi)]) / folds;
                int best = 0;
                double best_score = -1e18;
                for (int f = 0; f < folds; ++f) {
                    double desire =
                        target - pos_in_fold[static_cast<size_t>(f)][static_cast<size_t>(fi)];
                    double score = desire * 1e6 -
                                   static_cast<double>(fold_sets[static_cast<size_t>(f)].size());
                    if (score > best_score + 1e-12) {
                        best_score = score;
                        best = f;
                    }
                }
                assign(rec, best);
            }
        }
        for (int rec : order) {
            if (fold_of[static_cast<size_t>(rec)] >= 0) continue;
            int best = 0;
            for (int f = 1; f < folds; ++f)
                if (fold_sets[static_cast<size_t>(f)].size() <
                    fold_sets[static_cast<size_t>(best)].size())
                    best = f;
            assign(rec, best);
        }
        for (auto& fs : fold_sets) std::sort(fs.begin(), fs.end());
        plan.folds[machine_id] = std::move(fold_sets);
    }
    return plan;
}

FeatureTable build_features(const ScenarioConfig& scenario, const Dataset& data,
                            const dsp::FeatureProfile& profile) {
    FeatureTable table;
    table.n_faults = scenario.fault_types;
    for (const auto& [machine_id, records] : data) {
        auto& raws = table.raw[machine_id];
        auto& labs = table.labels[machine_id];
        raws.reserve(records.size());
        labs.reserve(records.size());
        for (const auto& rec : records) {
            raws.push_back(dsp::extract_raw(rec, scenario.channels, profile));
            labs.push_back(rec.labels);
        }
    }
    return table;
}

namespace {

struct FoldContext {
    dsp::NormStats stats;
    std::map<int, std::vector<dsp::FeatureBundle>> train, test;
    std::map<int, std::vector<const uint8_t*>> train_labels, test_labels;
};

FoldContext prepare_fold(const FeatureTable& features, const FoldPlan& plan,
                         int fold) {
    FoldContext ctx;
    std::vector<const dsp::RawFeatures*> train_raw;
    for (const auto& [machine_id, folds] : plan.folds) {
        const auto& raws = features.raw.at(machine_id);
        for (int f = 0; f < plan.n_folds; ++f) {
            if (f == fold) continue;
            for (int idx : folds[static_cast<size_t>(f)])
                train_raw.push_back(&raws[static_cast<size_t>(idx)]);
        }
    }
    // normalization statistics from training folds only
    ctx.stats = dsp::compute_norm_stats(train_raw);

    for (const auto& [machine_id, folds] : plan.folds) {
        const auto& raws = features.raw.at(machine_id);
        const auto& labs = features.labels.at(machine_id);
        for (int f = 0; f < plan.n_folds; ++f) {
            bool is_test = f == fold;
            for (int idx : folds[static_cast<size_t>(f)]) {
                auto bundle = dsp::normalize(raws[static_cast<size_t>(idx)], ctx.stats);
                if (is_test) {
                    ctx.test[machine_id].push_back(std::move(bundle));
                    ctx.test_labels[machine_id].push_back(
                        labs[static_cast<size_t>(idx)].data());
                } else {
                    ctx.train[machine_id].push_back(std::move(bundle));
                    ctx.train_labels[machine_id].push_back(
                        labs[static_cast<size_t>(idx)].data());
                }
            }
        }
    }
    return ctx;
}

std::map<int, int> machine_factories(const ScenarioConfig& scenario) {
    std::map<int, int> out;
    for (const auto& m : scenario.machines) out[m.machine_id] = m.factory_id;
    return out;
}

std::map<int, std::vector<int>> dataset_positives(const FeatureTable& features) {
    std::map<int, std::vector<int>> out;
    for (const auto& [machine_id, labs] : features.labels) {
        std::vector<int> pos(static_cast<size_t>(features.n_faults), 0);
        for (const auto& l : labs)
            for (int i = 0; i < features.n_faults; ++i)
                if (l[static_cast<size_t>(i)]) ++pos[static_cast<size_t>(i)];
        out[machine_id] = std::move(pos);
    }
    return out;
}

void evaluate_machine(const std::string& method, int fold, int machine_id,
                      const model::DiagnosisModel& m, const ParamSet& params,
                      const std::vector<dsp::FeatureBundle>& test,
                      const std::vector<const uint8_t*>& test_labels,
                      const std::vector<int>& overall_pos, ResultTable& out) {
    const int nt = m.n_faults;
    const int n = static_cast<int>(test.size());
    std::vector<double> preds(static_cast<size_t>(n) * nt);
    std::vector<uint8_t> labels(static_cast<size_t>(n) * nt);
    for (int j = 0; j < n; ++j) {
        auto y = model::forward(m, params, test[static_cast<size_t>(j)], nullptr);
        for (int i = 0; i < nt; ++i) {
            preds[static_cast<size_t>(j) * nt + i] = y[static_cast<size_t>(i)];
            labels[static_cast<size_t>(j) * nt + i] =
                test_labels[static_cast<size_t>(j)][i];
        }
    }
    auto ms = model::metrics(preds, labels, n, nt);
    for (int i = 0; i < nt; ++i) {
        if (overall_pos[static_cast<size_t>(i)] == 0) continue;  // no such fault
        int test_pos = 0;
        for (int j = 0; j < n; ++j)
            if (labels[static_cast<size_t>(j) * nt + i]) ++test_pos;
        if (test_pos == 0) continue;  // undefined recall on this fold
        const auto& tm = ms[static_cast<size_t>(i)];
        out.rows.push_back({method, fold, machine_id, i, tm.f1, tm.accuracy,
                            tm.precision, tm.recall, test_pos});
    }
}

ResultTable run_fl_method(fedcore::Mode mode, const std::string& method,
                          const ScenarioConfig& scenario,
                          const FeatureTable& features,
                          const std::map<int, int>& groups, int n_groups,
                          const FoldPlan& plan, const MethodConfig& config) {
    ResultTable out;
    auto factories = machine_factories(scenario);
    auto overall = dataset_positives(features);

    for (int fold = 0; fold < plan.n_folds; ++fold) {
        FoldContext ctx = prepare_fold(features, plan, fold);

        // agents per (factory, group), data pooled over matching machines
        std::map<std::pair<int, int>, fedcore::AgentSpec> agents;
        for (const auto& [machine_id, bundles] : ctx.train) {
            int factory = factories.at(machine_id);
            int group = groups.at(machine_id);
            auto& spec = agents[{factory, group}];
            spec.factory_id = factory;
            spec.group_id = group;
            for (size_t j = 0; j < bundles.size(); ++j) {
                spec.data.bundles.push_back(&bundles[j]);
                spec.data.labels.push_back(ctx.train_labels.at(machine_id)[j]);
            }
        }
        std::vector<fedcore::AgentSpec> specs;
        for (auto& [key, spec] : agents) specs.push_back(std::move(spec));

        fedcore::FederationConfig fed = config.fed;
        fed.mode = mode;
        fed.seed = derive_seed(config.fed.seed, 0xf1, static_cast<uint64_t>(fold));
        fedcore::Federation federation(config.profile, features.n_faults,
                                       n_groups, std::move(specs), fed);
        federation.run_training();

        model::DiagnosisModel tmpl =
            model::build_model(config.profile, features.n_faults, fed.seed);
        for (const auto& [machine_id, test] : ctx.test) {
            int group = groups.at(machine_id);
            ParamSet params = federation.deployed_params(group);
            evaluate_machine(method, fold, machine_id, tmpl, params, test,
                             ctx.test_labels.at(machine_id),
                             overall.at(machine_id), out);
        }
    }
    return out;
}

}  // namespace

ResultTable run_single_machine(const ScenarioConfig& scenario,
                               const FeatureTable& features,
                               const FoldPlan& plan,
                               const MethodConfig& config) {
    ResultTable out;
    auto overall = dataset_positives(features);
    // budget parity with one federated agent: rounds x local epochs
    const int epochs = config.fed.max_rounds * config.fed.local_epochs;

    for (int fold = 0; fold < plan.n_folds; ++fold) {
        FoldContext ctx = prepare_fold(features, plan, fold);
        for (const auto& [machine_id, bundles] : ctx.train) {
            uint64_t seed = derive_seed(config.fed.seed, 0x519e,
                                        static_cast<uint64_t>(machine_id),
                                        static_cast<uint64_t>(fold));
            model::DiagnosisModel m =
                model::build_model(config.profile, features.n_faults, seed);
            model::TrainView view;
            for (size_t j = 0; j < bundles.size(); ++j) {
                view.bundles.push_back(&bundles[j]);
                view.labels.push_back(ctx.train_labels.at(machine_id)[j]);
            }
            model::TaskState state;
            model::train_local(m, view, epochs, config.fed.batch_size,
                               config.fed.lr, config.fed.momentum, state, seed);
            evaluate_machine("single_machine", fold, machine_id, m, m.params,
                             ctx.test.at(machine_id),
                             ctx.test_labels.at(machine_id),
                             overall.at(machine_id), out);
        }
    }
    return out;
}

ResultTable run_vanilla_fl(const ScenarioConfig& scenario,
                           const FeatureTable& features, const FoldPlan& plan,
                           const MethodConfig& config) {
    std::map<int, int> all_zero;
    for (const auto& m : scenario.machines) all_zero[m.machine_id] = 0;
    return run_fl_method(fedcore::Mode::vanilla, "vanilla_fl", scenario,
                         features, all_zero, 1, plan, config);
}

ResultTable run_clustering_fl(const ScenarioConfig& scenario,
                              const FeatureTable& features,
                              const std::map<int, int>& groups, int n_groups,
                              const FoldPlan& plan, const MethodConfig& config) {
    return run_fl_method(fedcore::Mode::clustering, "clustering_fl", scenario,
                         features, groups, n_groups, plan, config);
}

ResultTable run_personalized_fl(const ScenarioConfig& scenario,
                                const FeatureTable& features,
                                const std::map<int, int>& groups, int n_groups,
                                const FoldPlan& plan,
                                const MethodConfig& config) {
    return run_fl_method(fedcore::Mode::personalized, "personalized_fl",
                         scenario, features, groups, n_groups, plan, config);
}

std::vector<FaultSummaryRow> fault_type_summary(
    const std::vector<const ResultTable*>& tables) {
    std::map<std::pair<std::string, int>, std::pair<double, int>> acc;
    for (const ResultTable* t : tables)
        for (const auto& r : t->rows) {
            auto& a = acc[{r.method, r.fault}];
            a.first += r.f1;
            a.second += 1;
        }
    std::vector<FaultSummaryRow> out;
    for (const auto& [key, a] : acc)
        out.push_back({key.first, key.second, a.first / a.second, a.second});
    return out;
}

int band_of(double rate) {
    if (rate < 0.05) return 0;
    if (rate < 0.15) return 1;
    if (rate < 0.30) return 2;
    if (rate < 0.50) return 3;
    return 4;
}

std::string band_name(int band) {
    static const char* kNames[kNumBands] = {"0-5%", "5-15%", "15-30%", "30-50%",
                                            ">50%"};
    return kNames[band];
}

std::map<std::pair<int, int>, double> dataset_fault_rates(
    const FeatureTable& features) {
    std::map<std::pair<int, int>, double> out;
    for (const auto& [machine_id, labs] : features.labels) {
        for (int i = 0; i < features.n_faults; ++i) {
            int pos = 0;
            for (const auto& l : labs)
                if (l[static_cast<size_t>(i)]) ++pos;
            if (pos > 0)
                out[{machine_id, i}] =
                    static_cast<double>(pos) / static_cast<double>(labs.size());
        }
    }
    return out;
}

std::vector<BandRow> fault_rate_bands(
    const std::vector<const ResultTable*>& tables,
    const FeatureTable& features) {
    auto rates = dataset_fault_rates(features);
    std::map<std::pair<std::string, int>, std::pair<double, int>> acc;
    for (const ResultTable* t : tables)
        for (const auto& r : t->rows) {
            auto it = rates.find({r.machine_id, r.fault});
            if (it == rates.end()) continue;
            auto& a = acc[{r.method, band_of(it->second)}];
            a.first += r.f1;
            a.second += 1;
        }
    std::vector<BandRow> out;
    for (const auto& [key, a] : acc)
        out.push_back({key.first, key.second, a.first / a.second, a.second});
    return out;
}

int assign_new_machine(const std::vector<fedclust::Point>& raw_indices,
                       const fedclust::FederatedKmeansResult& centroids) {
    if (raw_indices.empty())
        throw DataError("assign_new_machine: no records");
    std::vector<int> votes(centroids.global.centroids.size(), 0);
    for (fedclust::Point p : raw_indices) {
        fedclust::apply_normalization(centroids.stats, p);
        ++votes[static_cast<size_t>(
            fedclust::nearest_centroid(p, centroids.global.centroids))];
    }
    int best = 0;
    for (size_t c = 1; c < votes.size(); ++c)
        if (votes[c] > votes[static_cast<size_t>(best)]) best = static_cast<int>(c);
    return best;
}

double mean_f1(const ResultTable& table) {
    if (table.rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : table.rows) s += r.f1;
    return s / static_cast<double>(table.rows.size());
}

void write_result_csv(const std::string& path, const ResultTable& table) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "method,fold,machine_id,fault,f1,accuracy,precision,recall,"
           "test_positives\n";
    char buf[256];
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%d\n",
                      r.method.c_str(), r.fold, r.machine_id, r.fault, r.f1,
                      r.accuracy, r.precision, r.recall, r.test_positives);
        out << buf;
    }
    // aggregates: macro-average per (machine, fault) across folds
    std::map<std::pair<int, int>, std::pair<double, int>> agg;
    for (const auto& r : table.rows) {
        auto& a = agg[{r.machine_id, r.fault}];
        a.first += r.f1;
        a.second += 1;
    }
    for (const auto& [key, a] : agg) {
        std::snprintf(buf, sizeof(buf), "aggregate,-1,%d,%d,%.6f,,,,%d\n",
                      key.first, key.second, a.first / a.second, a.second);
        out << buf;
    }
}

void write_fault_summary_csv(const std::string& path,
                             const std::vector<FaultSummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "method,fault,mean_f1,n_rows\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%d\n", r.method.c_str(),
                      r.fault, r.mean_f1, r.n_rows);
        out << buf;
    }
}

void write_band_csv(const std::string& path, const std::vector<BandRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "method,band,mean_f1,n_rows\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%d\n", r.method.c_str(),
                      band_name(r.band).c_str(), r.mean_f1, r.n_rows);
        out << buf;
    }
}

}  // namespace eval
}  // namespace fspn
