#include "fspn/fedcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fspn {
namespace fedcore {

std::vector<double> adaptive_weights(std::vector<double> f1_scores) {
    double sum = 0.0;
    for (auto& f : f1_scores) {
        f = std::max(f, model::kF1Floor);
        sum += f;
    }
    std::vector<double> c(f1_scores.size());
    for (size_t k = 0; k < c.size(); ++k) c[k] = sum / (f1_scores[k] * f1_scores[k]);
    return c;
}

ParamSet aggregate(const std::vector<const ParamSet*>& param_sets,
                   const std::vector<double>& weights) {
    if (param_sets.empty() || param_sets.size() != weights.size())
        throw ProtocolError("aggregate: inputs and weights do not match");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ProtocolError("aggregate: negative weight");
        wsum += w;
    }
    if (wsum <= 0.0) throw ProtocolError("aggregate: all weights zero");
    for (const ParamSet* p : param_sets)
        if (!ParamSet::same_structure(*p, *param_sets[0]))
            throw ProtocolError("aggregate: structural mismatch");

    ParamSet out = param_sets[0]->zeros_like();
    for (size_t a = 0; a < out.arrays().size(); ++a) {
        auto& dst = out.arrays()[a].v;
        std::vector<double> acc(dst.size(), 0.0);
        for (size_t k = 0; k < param_sets.size(); ++k) {
            const auto& src = param_sets[k]->arrays()[a].v;
            const double w = weights[k] / wsum;
            for (size_t i = 0; i < dst.size(); ++i) acc[i] += w * src[i];
        }
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(acc[i]);
    }
    return out;
}

Federation::Federation(const model::ModelProfile& profile, int n_faults,
                       int n_groups, std::vector<AgentSpec> agents,
                       FederationConfig config)
    : profile_(profile), n_faults_(n_faults), n_groups_(n_groups),
      specs_(std::move(agents)), config_(config) {
    if (specs_.empty()) throw ProtocolError("federation needs agents");
    for (const auto& s : specs_)
        if (s.data.bundles.empty())
            throw ProtocolError("agent without data (factory " +
                                std::to_string(s.factory_id) + ")");
    // fixed agent order: (factory, group)
    std::sort(specs_.begin(), specs_.end(), [](const auto& a, const auto& b) {
        return std::tie(a.factory_id, a.group_id) <
               std::tie(b.factory_id, b.group_id);
    });

    // round 0: one seeded init broadcast to everyone
    model::DiagnosisModel init =
        model::build_model(profile_, n_faults_, config_.seed);
    server_.w_global = init.params.filtered(Partition::common);
    server_.theta_group.assign(static_cast<size_t>(n_groups_),
                               init.params.filtered(Partition::head));
    group_common_.assign(static_cast<size_t>(n_groups_),
                         init.params.filtered(Partition::common));
    best_group_common_ = group_common_;
    for (size_t i = 0; i < specs_.size(); ++i) {
        models_.push_back(model::build_model(profile_, n_faults_, config_.seed));
        states_.emplace_back();
        last_f1_.push_back(model::kF1Floor);
        last_loss_.push_back(0.0);
    }
}

void Federation::broadcast() {
    for (size_t i = 0; i < specs_.size(); ++i) {
        const size_t g = static_cast<size_t>(specs_[i].group_id);
        if (config_.mode == Mode::clustering)
            models_[i].params.assign_from(group_common_[g]);
        else
            models_[i].params.assign_from(server_.w_global);
        models_[i].params.assign_from(server_.theta_group[g]);
    }
}

void Federation::local_train_all() {
    for (size_t i = 0; i < specs_.size(); ++i) {
        uint64_t seed = derive_seed(config_.seed, 0xa9e27,
                                    static_cast<uint64_t>(server_.round),
                                    derive_seed(static_cast<uint64_t>(specs_[i].factory_id),
                                                static_cast<uint64_t>(specs_[i].group_id)));
        model::TrainResult res = model::train_local(
            models_[i], specs_[i].data, config_.local_epochs, config_.batch_size,
            config_.lr, config_.momentum, states_[i], seed);
        last_f1_[i] = res.mean_f1;
        last_loss_[i] = res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back();
        log_.push_back({server_.round, specs_[i].factory_id, specs_[i].group_id,
                        res.mean_f1, last_loss_[i]});
    }
}

void Federation::aggregate_uploads(const std::vector<AgentUpload>& uploads) {
    const bool adaptive = config_.mode == Mode::personalized;

    std::vector<ParamSet> commons, heads;
    commons.reserve(uploads.size());
    heads.reserve(uploads.size());
    for (const auto& u : uploads) {
        commons.push_back(u.params.filtered(Partition::common));
        heads.push_back(u.params.filtered(Partition::head));
    }

    auto weights_for = [&](const std::vector<size_t>& idx) {
        std::vector<double> f1s;
        for (size_t i : idx) f1s.push_back(uploads[i].mean_f1);
        if (adaptive) return adaptive_weights(f1s);
        return std::vector<double>(idx.size(), 1.0);
    };

    std::vector<std::vector<size_t>> by_group(static_cast<size_t>(n_groups_));
    std::vector<size_t> all;
    for (size_t i = 0; i < specs_.size(); ++i) {
        all.push_back(i);
        by_group[static_cast<size_t>(specs_[i].group_id)].push_back(i);
    }

    if (config_.mode == Mode::clustering) {
        // fully independent federations per group
        for (int g = 0; g < n_groups_; ++g) {
            const auto& idx = by_group[static_cast<size_t>(g)];
            if (idx.empty()) continue;
            std::vector<const ParamSet*> cs, hs;
            for (size_t i : idx) {
                cs.push_back(&commons[i]);
                hs.push_back(&heads[i]);
            }
            auto w = weights_for(idx);
            // per-group common copy rides in theta storage plus a group slot
            // of w_global is meaningless here; keep a per-group full model by
            // storing the aggregated common in theta_group's companion below
            server_.theta_group[static_cast<size_t>(g)] = aggregate(hs, w);
            group_common_[static_cast<size_t>(g)] = aggregate(cs, w);
        }
    } else {
        auto w_all = weights_for(all);
        std::vector<const ParamSet*> cs;
        for (size_t i : all) cs.push_back(&commons[i]);
        server_.w_global = aggregate(cs, w_all);
        if (config_.mode == Mode::vanilla) {
            // single global model: heads aggregated across everyone
            std::vector<const ParamSet*> hs;
            for (size_t i : all) hs.push_back(&heads[i]);
            ParamSet theta = aggregate(hs, w_all);
            for (auto& t : server_.theta_group) t = theta;
        } else {
            for (int g = 0; g < n_groups_; ++g) {
                const auto& idx = by_group[static_cast<size_t>(g)];
                if (idx.empty()) continue;
                std::vector<const ParamSet*> hs;
                for (size_t i : idx) hs.push_back(&heads[i]);
                server_.theta_group[static_cast<size_t>(g)] =
                    aggregate(hs, weights_for(idx));
            }
        }
    }
    ++server_.round;
}

void Federation::run_round() {
    broadcast();
    local_train_all();
    std::vector<AgentUpload> uploads;
    uploads.reserve(specs_.size());
    for (size_t i = 0; i < specs_.size(); ++i)
        uploads.push_back({models_[i].params, last_f1_[i]});
    aggregate_uploads(uploads);
}

ServerState Federation::run_training() {
    ServerState best = server_;
    double best_f1 = -1.0;
    int stale = 0;
    for (int round = 0; round < config_.max_rounds; ++round) {
        run_round();
        double mean = 0.0;
        for (double f : last_f1_) mean += f;
        mean /= static_cast<double>(last_f1_.size());
        if (mean > best_f1 + config_.improve_eps) {
            best_f1 = mean;
            best = server_;
            best_group_common_ = group_common_;
            stale = 0;
        } else {
            ++stale;
            if (stale >= config_.patience) break;
        }
    }
    server_ = best;
    group_common_ = best_group_common_;
    return best;
}

ParamSet Federation::deployed_params(int group) const {
    model::DiagnosisModel tmpl =
        model::build_model(profile_, n_faults_, config_.seed);
    ParamSet params = std::move(tmpl.params);
    if (config_.mode == Mode::clustering)
        params.assign_from(group_common_[static_cast<size_t>(group)]);
    else
        params.assign_from(server_.w_global);
    params.assign_from(server_.theta_group[static_cast<size_t>(group)]);
    return params;
}

void write_round_log_csv(const std::string& path,
                         const std::vector<RoundLogRow>& log) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write round log " + path);
    out << "round,factory_id,group_id,mean_f1,loss\n";
    char buf[128];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%.6f\n", r.round,
                      r.factory_id, r.group_id, r.mean_f1, r.loss);
        out << buf;
    }
}

}  // namespace fedcore
}  // namespace fspn
