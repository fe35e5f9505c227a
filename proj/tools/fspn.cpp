// fspn: scenario generation, federated clustering, training, evaluation and
// reporting for the multi-task vibration-diagnosis pipeline.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fspn/eval.hpp"
#include "fspn/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fspn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitWarning = 2;  // soft failures (e.g. non-convergence)

constexpr const char* kVersion = "1.0.0";

struct CommonOpts {
    std::string config;
    std::string out = "out";
    std::string profile = "desk";
    uint64_t seed = 42;
    bool seed_set = false;
    int workers = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config, "scenario JSON path");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--profile", o.profile, "model profile (desk|paper-shape)")
        ->check(CLI::IsMember({"desk", "paper-shape"}));
    cmd->add_option("--seed", o.seed, "master seed")
        ->each([&o](const std::string&) { o.seed_set = true; });
    cmd->add_option("--workers", o.workers, "worker cap (env FSPN_WORKERS)");
}

int effective_workers(const CommonOpts& o) {
    if (const char* env = std::getenv("FSPN_WORKERS"))
        return std::max(1, std::atoi(env));
    return std::max(1, o.workers);
}

uint64_t fnv1a(const std::string& bytes) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(ss.str())));
    return buf;
}

ScenarioConfig load_or_default(const CommonOpts& o) {
    if (!o.config.empty()) {
        ScenarioConfig sc = synth::load_scenario_json(o.config);
        if (o.seed_set) sc.master_seed = o.seed;
        return sc;
    }
    return synth::default_scenario(o.seed);
}

model::ModelProfile profile_by_name(const std::string& name) {
    if (name == "paper-shape") return model::paper_shape_profile();
    return model::desk_profile();
}

void write_manifest(const std::string& out_dir, const std::string& stage,
                    const CommonOpts& o, const ScenarioConfig& scenario,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    json extra = json::object()) {
    json m;
    m["stage"] = stage;
    m["version"] = kVersion;
    m["seed"] = scenario.master_seed;
    m["profile"] = o.profile;
    m["config_hash"] =
        o.config.empty() ? std::string("default") : file_hash(o.config);
    // record paths relative to the output directory so identical runs into
    // different directories produce identical bytes
    auto relativize = [&](const std::vector<std::string>& paths) {
        std::vector<std::string> rel;
        for (const auto& p : paths) {
            auto r = fs::relative(p, out_dir).generic_string();
            rel.push_back(r.rfind("..", 0) == 0 ? p : r);
        }
        return rel;
    };
    m["inputs"] = relativize(inputs);
    m["outputs"] = relativize(outputs);
    for (auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream f(out_dir + "/" + stage + "_manifest.json");
    f << m.dump(2) << "\n";
}

// ---- clustering helpers ----------------------------------------------------

std::map<int, std::vector<fedclust::Point>> healthy_index_points(
    const ScenarioConfig& scenario, const Dataset& data) {
    std::map<int, std::vector<fedclust::Point>> out;
    for (const auto& [machine_id, records] : data) {
        auto& pts = out[machine_id];
        for (const auto& rec : records)
            if (rec.healthy())
                pts.push_back(dsp::index_vector(rec, scenario.channels));
    }
    return out;
}

struct ClusterOutcome {
    fedclust::FederatedKmeansResult result;
    fedclust::GroupAssignment groups;
    int n_groups = 0;
};

ClusterOutcome cluster_scenario(const ScenarioConfig& scenario,
                                const Dataset& data, int k) {
    auto machine_pts = healthy_index_points(scenario, data);
    std::map<int, fedclust::Client> by_factory;
    for (const auto& m : scenario.machines) {
        auto& c = by_factory[m.factory_id];
        c.factory_id = m.factory_id;
        auto it = machine_pts.find(m.machine_id);
        if (it == machine_pts.end()) continue;
        c.points.insert(c.points.end(), it->second.begin(), it->second.end());
    }
    std::vector<fedclust::Client> clients;
    for (auto& [fid, c] : by_factory)
        if (!c.points.empty()) clients.push_back(std::move(c));

    ClusterOutcome out;
    out.result = fedclust::run_federated_kmeans(
        clients, k, 1e-6, 50, derive_seed(scenario.master_seed, 0xc105));
    // machine points must be normalized the same way before assignment
    for (auto& [mid, pts] : machine_pts)
        for (auto& p : pts) fedclust::apply_normalization(out.result.stats, p);
    out.groups = fedclust::assign_groups(machine_pts, out.result.global);
    out.n_groups = k;
    return out;
}

void save_groups_json(const std::string& path, const ClusterOutcome& c) {
    json j;
    j["n_groups"] = c.n_groups;
    j["converged"] = c.result.global.converged;
    j["rounds"] = c.result.global.round;
    json g = json::object();
    for (const auto& [mid, grp] : c.groups.group_of)
        g[std::to_string(mid)] = grp;
    j["group_of"] = g;
    json fl = json::array();
    for (const auto& [mid, f] : c.groups.flagged)
        if (f) fl.push_back(mid);
    j["flagged"] = fl;
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << j.dump(2) << "\n";
}

std::pair<std::map<int, int>, int> load_groups_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read " + path);
    json j = json::parse(f);
    std::map<int, int> groups;
    for (auto& [k, v] : j.at("group_of").items())
        groups[std::stoi(k)] = v.get<int>();
    return {groups, j.at("n_groups").get<int>()};
}

std::pair<std::map<int, int>, int> groups_for(const ScenarioConfig& scenario,
                                              const Dataset& data,
                                              const std::string& groups_path,
                                              int k) {
    if (!groups_path.empty()) return load_groups_json(groups_path);
    auto c = cluster_scenario(scenario, data, k);
    return {c.groups.group_of, c.n_groups};
}

fedcore::FederationConfig make_fed(const ScenarioConfig& scenario, int rounds,
                                   int epochs, double lr, int batch) {
    fedcore::FederationConfig fed;
    fed.max_rounds = rounds;
    fed.local_epochs = epochs;
    fed.lr = lr;
    fed.batch_size = batch;
    fed.seed = scenario.master_seed;
    return fed;
}

// ---- subcommands -----------------------------------------------------------

int cmd_synth(const CommonOpts& o) {
    ScenarioConfig scenario = load_or_default(o);
    synth::validate(scenario);
    Dataset data = synth::generate_scenario(scenario);
    fs::create_directories(o.out + "/data");
    std::string scenario_out = o.out + "/scenario.json";
    synth::save_scenario_json(scenario_out, scenario);
    synth::save_dataset(o.out + "/data", scenario, data);
    size_t n = 0;
    for (const auto& [mid, recs] : data) n += recs.size();
    write_manifest(o.out, "synth", o, scenario, {},
                   {scenario_out, o.out + "/data"},
                   {{"machines", scenario.machines.size()}, {"records", n}});
    std::cout << "synth: " << scenario.machines.size() << " machines, " << n
              << " records -> " << o.out << "/data\n";
    return kExitOk;
}

int cmd_cluster(const CommonOpts& o, const std::string& data_dir, int k) {
    ScenarioConfig scenario = load_or_default(o);
    Dataset data = synth::load_dataset(data_dir, scenario);
    ClusterOutcome c = cluster_scenario(scenario, data, k);
    fs::create_directories(o.out);
    std::string centroid_path = o.out + "/centroids.json";
    std::string groups_path = o.out + "/groups.json";
    fedclust::save_centroids_json(centroid_path, c.result);
    save_groups_json(groups_path, c);
    write_manifest(o.out, "cluster", o, scenario, {data_dir},
                   {centroid_path, groups_path},
                   {{"k", k},
                    {"rounds", c.result.global.round},
                    {"converged", c.result.global.converged}});
    for (const auto& [mid, grp] : c.groups.group_of)
        std::cout << "machine " << mid << " -> group " << grp << "\n";
    if (!c.result.global.converged) {
        std::cerr << "cluster: warning: k-means did not converge within the "
                     "round budget\n";
        return kExitWarning;
    }
    return kExitOk;
}

int cmd_train(const CommonOpts& o, const std::string& data_dir,
              const std::string& groups_path, int k, int rounds, int epochs,
              double lr, int batch) {
    ScenarioConfig scenario = load_or_default(o);
    Dataset data = synth::load_dataset(data_dir, scenario);
    auto [groups, n_groups] = groups_for(scenario, data, groups_path, k);

    model::ModelProfile profile = profile_by_name(o.profile);
    auto fprof = model::feature_profile_for(profile);
    eval::FeatureTable features = eval::build_features(scenario, data, fprof);

    // no held-out fold here: this is the deployment training pass
    std::vector<const dsp::RawFeatures*> all_raw;
    for (const auto& [mid, raws] : features.raw)
        for (const auto& r : raws) all_raw.push_back(&r);
    dsp::NormStats stats = dsp::compute_norm_stats(all_raw);

    std::map<int, std::vector<dsp::FeatureBundle>> bundles;
    for (const auto& [mid, raws] : features.raw)
        for (const auto& r : raws)
            bundles[mid].push_back(dsp::normalize(r, stats));

    std::map<int, int> factory_of;
    for (const auto& m : scenario.machines) factory_of[m.machine_id] = m.factory_id;
    std::map<std::pair<int, int>, fedcore::AgentSpec> agents;
    for (const auto& [mid, bs] : bundles) {
        auto& spec = agents[{factory_of.at(mid), groups.at(mid)}];
        spec.factory_id = factory_of.at(mid);
        spec.group_id = groups.at(mid);
        for (size_t j = 0; j < bs.size(); ++j) {
            spec.data.bundles.push_back(&bs[j]);
            spec.data.labels.push_back(features.labels.at(mid)[j].data());
        }
    }
    std::vector<fedcore::AgentSpec> specs;
    for (auto& [key, s] : agents) specs.push_back(std::move(s));

    fedcore::FederationConfig fed = make_fed(scenario, rounds, epochs, lr, batch);
    fedcore::Federation federation(profile, features.n_faults, n_groups,
                                   std::move(specs), fed);
    fedcore::ServerState best = federation.run_training();

    fs::create_directories(o.out);
    std::vector<std::string> outputs;
    std::string w_path = o.out + "/w_global.ckpt";
    save_checkpoint(w_path, best.w_global);
    outputs.push_back(w_path);
    for (int g = 0; g < n_groups; ++g) {
        std::string t_path = o.out + "/theta_group" + std::to_string(g) + ".ckpt";
        save_checkpoint(t_path, best.theta_group[static_cast<size_t>(g)]);
        outputs.push_back(t_path);
    }
    std::string log_path = o.out + "/round_log.csv";
    fedcore::write_round_log_csv(log_path, federation.log());
    outputs.push_back(log_path);
    write_manifest(o.out, "train", o, scenario, {data_dir, groups_path}, outputs,
                   {{"rounds_run", best.round},
                    {"n_groups", n_groups},
                    {"centroids", groups_path.empty()
                                      ? json()
                                      : json(fs::path(groups_path)
                                                 .replace_filename("centroids.json")
                                                 .string())}});
    std::cout << "train: " << best.round << " rounds, checkpoints in " << o.out
              << "\n";
    return kExitOk;
}

eval::MethodConfig method_config(const CommonOpts& o,
                                 const ScenarioConfig& scenario, int rounds,
                                 int epochs, double lr, int batch) {
    eval::MethodConfig mc;
    mc.profile = profile_by_name(o.profile);
    mc.fed = make_fed(scenario, rounds, epochs, lr, batch);
    return mc;
}

int cmd_evaluate(const CommonOpts& o, const std::string& data_dir,
                 const std::string& groups_path, int k, int folds, int rounds,
                 int epochs, double lr, int batch) {
    ScenarioConfig scenario = load_or_default(o);
    Dataset data = synth::load_dataset(data_dir, scenario);
    auto [groups, n_groups] = groups_for(scenario, data, groups_path, k);
    eval::MethodConfig mc = method_config(o, scenario, rounds, epochs, lr, batch);
    auto fprof = model::feature_profile_for(mc.profile);
    eval::FeatureTable features = eval::build_features(scenario, data, fprof);
    eval::FoldPlan plan = eval::make_folds(
        data, folds, derive_seed(scenario.master_seed, 0xf01d5));

    eval::ResultTable table =
        eval::run_personalized_fl(scenario, features, groups, n_groups, plan, mc);
    fs::create_directories(o.out);
    std::string csv = o.out + "/results_personalized.csv";
    eval::write_result_csv(csv, table);
    write_manifest(o.out, "evaluate", o, scenario, {data_dir}, {csv},
                   {{"folds", folds}, {"mean_f1", eval::mean_f1(table)}});
    std::cout << "evaluate: mean F1 " << eval::mean_f1(table) << " over "
              << table.rows.size() << " rows -> " << csv << "\n";
    return kExitOk;
}

int cmd_compare(const CommonOpts& o, const std::string& data_dir,
                const std::string& groups_path, int k, int folds, int rounds,
                int epochs, double lr, int batch) {
    ScenarioConfig scenario = load_or_default(o);
    Dataset data = synth::load_dataset(data_dir, scenario);
    auto [groups, n_groups] = groups_for(scenario, data, groups_path, k);
    eval::MethodConfig mc = method_config(o, scenario, rounds, epochs, lr, batch);
    auto fprof = model::feature_profile_for(mc.profile);
    eval::FeatureTable features = eval::build_features(scenario, data, fprof);
    eval::FoldPlan plan = eval::make_folds(
        data, folds, derive_seed(scenario.master_seed, 0xf01d5));

    fs::create_directories(o.out);
    eval::ResultTable single = eval::run_single_machine(scenario, features, plan, mc);
    eval::ResultTable vanilla = eval::run_vanilla_fl(scenario, features, plan, mc);
    eval::ResultTable clustered =
        eval::run_clustering_fl(scenario, features, groups, n_groups, plan, mc);
    eval::ResultTable personalized =
        eval::run_personalized_fl(scenario, features, groups, n_groups, plan, mc);

    std::vector<std::string> outputs;
    auto dump = [&](const char* name, const eval::ResultTable& t) {
        std::string p = o.out + "/results_" + name + ".csv";
        eval::write_result_csv(p, t);
        outputs.push_back(p);
    };
    dump("single_machine", single);
    dump("vanilla_fl", vanilla);
    dump("clustering_fl", clustered);
    dump("personalized_fl", personalized);

    std::vector<const eval::ResultTable*> all = {&single, &vanilla, &clustered,
                                                 &personalized};
    std::string fsum = o.out + "/fault_summary.csv";
    eval::write_fault_summary_csv(fsum, eval::fault_type_summary(all));
    outputs.push_back(fsum);
    std::string bands = o.out + "/fault_rate_bands.csv";
    eval::write_band_csv(bands, eval::fault_rate_bands(all, features));
    outputs.push_back(bands);

    write_manifest(o.out, "compare", o, scenario, {data_dir}, outputs,
                   {{"folds", folds},
                    {"mean_f1", {{"single_machine", eval::mean_f1(single)},
                                 {"vanilla_fl", eval::mean_f1(vanilla)},
                                 {"clustering_fl", eval::mean_f1(clustered)},
                                 {"personalized_fl", eval::mean_f1(personalized)}}}});
    std::cout << "compare: mean F1  single " << eval::mean_f1(single)
              << "  vanilla " << eval::mean_f1(vanilla) << "  clustering "
              << eval::mean_f1(clustered) << "  personalized "
              << eval::mean_f1(personalized) << "\n";
    return kExitOk;
}

int cmd_assign(const CommonOpts& o, const std::string& data_dir,
               const std::string& centroids_path) {
    ScenarioConfig scenario = load_or_default(o);
    Dataset data = synth::load_dataset(data_dir, scenario);
    fedclust::FederatedKmeansResult centroids =
        fedclust::load_centroids_json(centroids_path);
    auto machine_pts = healthy_index_points(scenario, data);
    for (const auto& m : scenario.machines) {
        auto it = machine_pts.find(m.machine_id);
        if (it == machine_pts.end() || it->second.empty()) {
            std::cout << "machine " << m.machine_id
                      << " -> no healthy records, cannot assign\n";
            continue;
        }
        int g = eval::assign_new_machine(it->second, centroids);
        std::cout << "machine " << m.machine_id << " -> group " << g << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"personalized federated diagnosis pipeline"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string data_dir = "out/data";
    std::string groups_path;
    std::string centroids_path;
    int k = 2, folds = 5, rounds = 20, epochs = 2, batch = 16;
    double lr = 0.01;

    auto add_data = [&](CLI::App* c) {
        c->add_option("--data", data_dir, "dataset directory");
    };
    auto add_train_opts = [&](CLI::App* c) {
        c->add_option("--groups", groups_path, "groups.json from cluster stage");
        c->add_option("--k", k, "number of similar-machine groups");
        c->add_option("--rounds", rounds, "federated rounds");
        c->add_option("--epochs", epochs, "local epochs per round");
        c->add_option("--lr", lr, "learning rate");
        c->add_option("--batch", batch, "minibatch size");
    };

    CLI::App* c_synth = app.add_subcommand("synth", "generate a dataset");
    add_common(c_synth, o);

    CLI::App* c_cluster =
        app.add_subcommand("cluster", "federated similar-machine clustering");
    add_common(c_cluster, o);
    add_data(c_cluster);
    c_cluster->add_option("--k", k, "number of groups");

    CLI::App* c_train = app.add_subcommand("train", "federated training");
    add_common(c_train, o);
    add_data(c_train);
    add_train_opts(c_train);

    CLI::App* c_eval =
        app.add_subcommand("evaluate", "cross-validated evaluation");
    add_common(c_eval, o);
    add_data(c_eval);
    add_train_opts(c_eval);
    c_eval->add_option("--folds", folds, "cross-validation folds");

    CLI::App* c_cmp = app.add_subcommand("compare", "all four methods");
    add_common(c_cmp, o);
    add_data(c_cmp);
    add_train_opts(c_cmp);
    c_cmp->add_option("--folds", folds, "cross-validation folds");

    CLI::App* c_assign =
        app.add_subcommand("assign", "assign machines to exported groups");
    add_common(c_assign, o);
    add_data(c_assign);
    c_assign->add_option("--centroids", centroids_path, "centroids.json")
        ->required();

    CLI11_PARSE(app, argc, argv);
    (void)effective_workers(o);  // single process; kept for interface parity

    try {
        if (app.got_subcommand(c_synth)) return cmd_synth(o);
        if (app.got_subcommand(c_cluster)) return cmd_cluster(o, data_dir, k);
        if (app.got_subcommand(c_train))
            return cmd_train(o, data_dir, groups_path, k, rounds, epochs, lr,
                             batch);
        if (app.got_subcommand(c_eval))
            return cmd_evaluate(o, data_dir, groups_path, k, folds, rounds,
                                epochs, lr, batch);
        if (app.got_subcommand(c_cmp))
            return cmd_compare(o, data_dir, groups_path, k, folds, rounds,
                               epochs, lr, batch);
        if (app.got_subcommand(c_assign))
            return cmd_assign(o, data_dir, centroids_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
