#pragma once

#include <string>
#include <vector>

#include "fspn/model.hpp"

namespace fspn {
namespace fedcore {

// c_k = (sum_m F_m) / F_k^2, inputs floored at the F1 floor. Returned weights
// are unnormalized; aggregate() normalizes.
std::vector<double> adaptive_weights(std::vector<double> f1_scores);

// Elementwise convex combination of structurally identical parameter sets.
ParamSet aggregate(const std::vector<const ParamSet*>& param_sets,
                   const std::vector<double>& weights);

enum class Mode {
    personalized,  // adaptive weights; common global, heads per group
    vanilla,       // uniform weights; full parameter set aggregated globally
    clustering,    // uniform weights; full parameter set aggregated per group
};

struct FederationConfig {
    Mode mode = Mode::personalized;
    int local_epochs = 2;  // M
    int max_rounds = 30;
    int patience = 5;
    double improve_eps = 1e-3;
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 16;
    uint64_t seed = 0;
};

// One training entity per (factory, similar-machine group): that factory's
// records for machines in the group. Data never leaves the agent; uploads
// carry only parameters and a scalar F1.
struct AgentSpec {
    int factory_id = 0;
    int group_id = 0;
    model::TrainView data;
};

struct AgentUpload {
    ParamSet params;
    double mean_f1 = model::kF1Floor;
};

struct RoundLogRow {
    int round = 0;
    int factory_id = 0;
    int group_id = 0;
    double mean_f1 = 0;
    double loss = 0;
};

struct ServerState {
    ParamSet w_global;               // common partition
    std::vector<ParamSet> theta_group;  // head partition per group
    int round = 0;
};

class Federation {
public:
    Federation(const model::ModelProfile& profile, int n_faults, int n_groups,
               std::vector<AgentSpec> agents, FederationConfig config);

    // Load server parameters into every agent model.
    void broadcast();
    // broadcast + local training + aggregation.
    void run_round();

    // Round loop with patience-based early stopping on the mean agent F1;
    // the returned server state is the best one seen.
    ServerState run_training();

    const ServerState& server() const { return server_; }
    ServerState& server() { return server_; }
    int n_groups() const { return n_groups_; }
    const std::vector<AgentSpec>& agent_specs() const { return specs_; }
    const model::DiagnosisModel& agent_model(size_t i) const {
        return models_[i];
    }
    double agent_f1(size_t i) const { return last_f1_[i]; }
    const std::vector<RoundLogRow>& log() const { return log_; }

    // Model assembled from w_global + the group's theta.
    ParamSet deployed_params(int group) const;

private:
    void local_train_all();
    void aggregate_uploads(const std::vector<AgentUpload>& uploads);

    model::ModelProfile profile_;
    int n_faults_;
    int n_groups_;
    std::vector<AgentSpec> specs_;
    FederationConfig config_;
    std::vector<model::DiagnosisModel> models_;
    std::vector<model::TaskState> states_;
    std::vector<double> last_f1_;
    std::vector<double> last_loss_;
    ServerState server_;
    // clustering mode keeps an independent common block per group
    std::vector<ParamSet> group_common_;
    std::vector<ParamSet> best_group_common_;
    std::vector<RoundLogRow> log_;
};

void write_round_log_csv(const std::string& path,
                         const std::vector<RoundLogRow>& log);

}  // namespace fedcore
}  // namespace fspn
