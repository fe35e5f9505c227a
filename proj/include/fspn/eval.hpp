#pragma once

#include <map>
#include <string>
#include <vector>

#include "fspn/fedclust.hpp"
#include "fspn/fedcore.hpp"

namespace fspn {
namespace eval {

// Per machine: disjoint record-index subsets (indices into the machine's
// record list), stratified per fault type.
struct FoldPlan {
    int n_folds = 5;
    std::map<int, std::vector<std::vector<int>>> folds;
};

FoldPlan make_folds(const Dataset& data, int folds, uint64_t seed);

// Unnormalized features and labels for every record, grouped by machine.
// Normalization happens per fold, from training folds only.
struct FeatureTable {
    std::map<int, std::vector<dsp::RawFeatures>> raw;
    std::map<int, std::vector<std::vector<uint8_t>>> labels;
    int n_faults = 0;
};

FeatureTable build_features(const ScenarioConfig& scenario, const Dataset& data,
                            const dsp::FeatureProfile& profile);

struct ResultRow {
    std::string method;
    int fold = 0;
    int machine_id = 0;
    int fault = 0;
    double f1 = 0, accuracy = 0, precision = 0, recall = 0;
    int test_positives = 0;
};

struct ResultTable {
    std::vector<ResultRow> rows;
};

struct MethodConfig {
    model::ModelProfile profile;
    fedcore::FederationConfig fed;
};

ResultTable run_single_machine(const ScenarioConfig& scenario,
                               const FeatureTable& features,
                               const FoldPlan& plan, const MethodConfig& config);

ResultTable run_vanilla_fl(const ScenarioConfig& scenario,
                           const FeatureTable& features, const FoldPlan& plan,
                           const MethodConfig& config);

ResultTable run_clustering_fl(const ScenarioConfig& scenario,
                              const FeatureTable& features,
                              const std::map<int, int>& groups, int n_groups,
                              const FoldPlan& plan, const MethodConfig& config);

ResultTable run_personalized_fl(const ScenarioConfig& scenario,
                                const FeatureTable& features,
                                const std::map<int, int>& groups, int n_groups,
                                const FoldPlan& plan,
                                const MethodConfig& config);

// Macro-average F1 per (method, fault type).
struct FaultSummaryRow {
    std::string method;
    int fault = 0;
    double mean_f1 = 0;
    int n_rows = 0;
};
std::vector<FaultSummaryRow> fault_type_summary(
    const std::vector<const ResultTable*>& tables);

// Fault-rate bands: 0-5%, 5-15%, 15-30%, 30-50%, >50%.
constexpr int kNumBands = 5;
int band_of(double rate);
std::string band_name(int band);

// Overall per-(machine, fault) positive rate in the dataset.
std::map<std::pair<int, int>, double> dataset_fault_rates(
    const FeatureTable& features);

struct BandRow {
    std::string method;
    int band = 0;
    double mean_f1 = 0;
    int n_rows = 0;
};
std::vector<BandRow> fault_rate_bands(
    const std::vector<const ResultTable*>& tables, const FeatureTable& features);

// Deployment: classify a new machine's records with the exported centroids.
int assign_new_machine(const std::vector<fedclust::Point>& raw_indices,
                       const fedclust::FederatedKmeansResult& centroids);

void write_result_csv(const std::string& path, const ResultTable& table);
void write_fault_summary_csv(const std::string& path,
                             const std::vector<FaultSummaryRow>& rows);
void write_band_csv(const std::string& path, const std::vector<BandRow>& rows);

double mean_f1(const ResultTable& table);

}  // namespace eval
}  // namespace fspn
