#include "fspn/fedclust.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "fspn/rng.hpp"
#include "json.hpp"

namespace fspn {
namespace fedclust {

namespace {

double sq_dist(const Point& a, const Point& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

}  // namespace

int nearest_centroid(const Point& p, const std::vector<Point>& centroids) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centroids.size(); ++c) {
        double d = sq_dist(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

void apply_normalization(const NormalizeStats& stats, Point& p) {
    for (size_t i = 0; i < p.size(); ++i) p[i] = (p[i] - stats.mean[i]) / stats.std[i];
}

NormalizeStats federated_normalize(std::vector<Client>& clients) {
    size_t dim = 0;
    for (const auto& c : clients)
        if (!c.points.empty()) dim = c.points[0].size();
    if (dim == 0) throw ProtocolError("federated_normalize: no data");

    // client -> server payload: count, per-dimension sum and sum of squares
    double count = 0.0;
    std::vector<double> sum(dim, 0.0), sum2(dim, 0.0);
    for (const auto& c : clients) {
        for (const auto& p : c.points) {
            count += 1.0;
            for (size_t i = 0; i < dim; ++i) {
                sum[i] += p[i];
                sum2[i] += p[i] * p[i];
            }
        }
    }

    NormalizeStats stats;
    stats.mean.resize(dim);
    stats.std.resize(dim);
    for (size_t i = 0; i < dim; ++i) {
        stats.mean[i] = sum[i] / count;
        double var = std::max(0.0, sum2[i] / count - stats.mean[i] * stats.mean[i]);
        double sd = std::sqrt(var);
        stats.std[i] = sd < 1e-12 ? 1.0 : sd;  // zero-variance dims pass through
    }
    for (auto& c : clients)
        for (auto& p : c.points) apply_normalization(stats, p);
    return stats;
}

LocalReport local_kmeans_step(const Client& client,
                              const GlobalCentroids& global, int iters) {
    LocalReport rep;
    if (client.points.empty()) return rep;  // empty report, skipped by merge

    const int k = static_cast<int>(global.centroids.size());
    rep.centroids = global.centroids;
    rep.counts.assign(static_cast<size_t>(k), 0);

    // fewer distinct points than k: Lloyd still runs, but flag the padding
    {
        std::vector<Point> distinct;
        for (const auto& p : client.points)
            if (std::find(distinct.begin(), distinct.end(), p) == distinct.end())
                distinct.push_back(p);
        if (static_cast<int>(distinct.size()) < k) rep.padded = true;
    }

    std::vector<int> assign(client.points.size(), 0);
    for (int it = 0; it < iters; ++it) {
        for (size_t j = 0; j < client.points.size(); ++j)
            assign[j] = nearest_centroid(client.points[j], rep.centroids);
        std::vector<Point> acc(static_cast<size_t>(k),
                               Point(client.points[0].size(), 0.0));
        std::vector<int> cnt(static_cast<size_t>(k), 0);
        for (size_t j = 0; j < client.points.size(); ++j) {
            const auto& p = client.points[j];
            auto& a = acc[static_cast<size_t>(assign[j])];
            for (size_t i = 0; i < p.size(); ++i) a[i] += p[i];
            ++cnt[static_cast<size_t>(assign[j])];
        }
        for (int c = 0; c < k; ++c) {
            if (cnt[static_cast<size_t>(c)] == 0) continue;  // keep previous
            auto& ctr = rep.centroids[static_cast<size_t>(c)];
            for (size_t i = 0; i < ctr.size(); ++i)
                ctr[i] = acc[static_cast<size_t>(c)][i] / cnt[static_cast<size_t>(c)];
        }
    }
    for (size_t j = 0; j < client.points.size(); ++j)
        ++rep.counts[static_cast<size_t>(nearest_centroid(client.points[j],
                                                          rep.centroids))];
    return rep;
}

GlobalCentroids server_merge(const std::vector<LocalReport>& reports,
                             const GlobalCentroids& prev) {
    bool any = false;
    for (const auto& r : reports)
        if (!r.centroids.empty()) any = true;
    if (!any) throw ProtocolError("server_merge: all reports empty");

    const int k = static_cast<int>(prev.centroids.size());
    const size_t dim = prev.centroids[0].size();
    std::vector<Point> acc(static_cast<size_t>(k), Point(dim, 0.0));
    std::vector<double> weight(static_cast<size_t>(k), 0.0);
    for (const auto& r : reports) {
        for (size_t c = 0; c < r.centroids.size(); ++c) {
            int slot = nearest_centroid(r.centroids[c], prev.centroids);
            double w = static_cast<double>(r.counts[c]);
            if (w <= 0.0) continue;
            for (size_t i = 0; i < dim; ++i)
                acc[static_cast<size_t>(slot)][i] += w * r.centroids[c][i];
            weight[static_cast<size_t>(slot)] += w;
        }
    }
    GlobalCentroids out = prev;
    out.round = prev.round + 1;
    for (int c = 0; c < k; ++c) {
        if (weight[static_cast<size_t>(c)] <= 0.0) continue;  // unmatched slot
        for (size_t i = 0; i < dim; ++i)
            out.centroids[static_cast<size_t>(c)][i] =
                acc[static_cast<size_t>(c)][i] / weight[static_cast<size_t>(c)];
    }
    return out;
}

std::vector<Point> kmeanspp_init(const std::vector<Point>& points, int k,
                                 uint64_t seed) {
    if (points.empty()) throw ProtocolError("kmeanspp_init: no points");
    Rng rng(derive_seed(seed, 0x65ed));
    std::vector<Point> centroids;
    centroids.push_back(points[rng.below(points.size())]);
    std::vector<double> d2(points.size());
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (size_t j = 0; j < points.size(); ++j) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(points[j], c));
            d2[j] = best;
            total += best;
        }
        if (total <= 0.0) {
            centroids.push_back(points[rng.below(points.size())]);
            continue;
        }
        double target = rng.uniform() * total;
        size_t pick = 0;
        double run = 0.0;
        for (size_t j = 0; j < points.size(); ++j) {
            run += d2[j];
            if (run >= target) {
                pick = j;
                break;
            }
        }
        centroids.push_back(points[pick]);
    }
    return centroids;
}

FederatedKmeansResult run_federated_kmeans(std::vector<Client>& clients, int k,
                                           double eps, int max_rounds,
                                           uint64_t seed, int local_iters) {
    if (k < 2) throw ProtocolError("run_federated_kmeans: k must be >= 2");
    FederatedKmeansResult result;
    result.stats = federated_normalize(clients);

    const Client* coordinator = nullptr;
    for (const auto& c : clients)
        if (!c.points.empty()) {
            coordinator = &c;
            break;
        }
    if (!coordinator) throw ProtocolError("run_federated_kmeans: no data");

    GlobalCentroids global;
    global.centroids = kmeanspp_init(coordinator->points, k, seed);

    for (int round = 0; round < max_rounds; ++round) {
        std::vector<LocalReport> reports;
        for (const auto& c : clients)
            reports.push_back(local_kmeans_step(c, global, local_iters));
        GlobalCentroids next = server_merge(reports, global);
        // convergence = movement of the merged global between rounds
        // (server_merge keeps slot alignment with the previous global)
        double shift = 0.0;
        for (size_t c = 0; c < next.centroids.size(); ++c)
            shift = std::max(
                shift, std::sqrt(sq_dist(next.centroids[c], global.centroids[c])));
        global = next;
        global.round = round + 1;
        if (shift < eps) {
            global.converged = true;
            break;
        }
    }
    result.global = global;
    return result;
}

GroupAssignment assign_groups(
    const std::map<int, std::vector<Point>>& machine_points,
    const GlobalCentroids& global) {
    GroupAssignment out;
    const int k = static_cast<int>(global.centroids.size());
    for (const auto& [machine_id, points] : machine_points) {
        if (points.empty()) {
            // no normal-condition records to vote with: flag for the operator
            // and fall back to group 0
            out.flagged[machine_id] = true;
            out.group_of[machine_id] = 0;
            continue;
        }
        out.flagged[machine_id] = false;
        std::vector<int> votes(static_cast<size_t>(k), 0);
        for (const auto& p : points)
            ++votes[static_cast<size_t>(nearest_centroid(p, global.centroids))];
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)])
                best = c;  // ties keep the lower group id
        out.group_of[machine_id] = best;
    }
    return out;
}

using nlohmann::json;

void save_centroids_json(const std::string& path,
                         const FederatedKmeansResult& result) {
    json j;
    j["k"] = result.global.centroids.size();
    j["d"] = result.global.centroids.empty() ? 0
                                             : result.global.centroids[0].size();
    j["round"] = result.global.round;
    j["converged"] = result.global.converged;
    j["mean"] = result.stats.mean;
    j["std"] = result.stats.std;
    j["centroids"] = result.global.centroids;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write centroid export " + path);
    out << j.dump(2) << "\n";
}

FederatedKmeansResult load_centroids_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open centroid export " + path);
    json j = json::parse(in);
    FederatedKmeansResult r;
    r.stats.mean = j.at("mean").get<std::vector<double>>();
    r.stats.std = j.at("std").get<std::vector<double>>();
    r.global.centroids = j.at("centroids").get<std::vector<Point>>();
    r.global.round = j.at("round").get<int>();
    r.global.converged = j.at("converged").get<bool>();
    return r;
}

}  // namespace fedclust
}  // namespace fspn
