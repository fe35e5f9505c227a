#pragma once

#include <map>
#include <string>
#include <vector>

#include "fspn/data.hpp"

namespace fspn {
namespace fedclust {

using Point = std::vector<double>;

// One clustering client per factory; only index vectors of normal-condition
// records participate.
struct Client {
    int factory_id = 0;
    std::vector<Point> points;
};

struct NormalizeStats {
    std::vector<double> mean;
    std::vector<double> std;  // 1.0 where the global variance vanishes
};

// Clients exchange only (count, sum, sum-of-squares) per dimension; the
// server derives global z-score parameters. Normalizes the client points
// in place.
NormalizeStats federated_normalize(std::vector<Client>& clients);

struct LocalReport {
    std::vector<Point> centroids;
    std::vector<int> counts;
    bool padded = false;  // client had fewer distinct points than k
};

struct GlobalCentroids {
    std::vector<Point> centroids;
    int round = 0;
    bool converged = false;
};

// Lloyd iterations seeded from the global centroids. Empty clusters keep
// their previous centroid.
LocalReport local_kmeans_step(const Client& client,
                              const GlobalCentroids& global, int iters);

// Each client centroid is matched to its nearest previous global centroid;
// per slot the merge is the count-weighted mean. Unmatched slots keep their
// previous value.
GlobalCentroids server_merge(const std::vector<LocalReport>& reports,
                             const GlobalCentroids& prev);

// k-means++ seeding over the given points.
std::vector<Point> kmeanspp_init(const std::vector<Point>& points, int k,
                                 uint64_t seed);

struct FederatedKmeansResult {
    GlobalCentroids global;
    NormalizeStats stats;
};

// Full loop: federated normalization, k-means++ init on the first client,
// then broadcast / local Lloyd / merge until the largest local-vs-global gap
// drops below eps or max_rounds is hit. Clients are normalized in place.
FederatedKmeansResult run_federated_kmeans(std::vector<Client>& clients, int k,
                                           double eps, int max_rounds,
                                           uint64_t seed, int local_iters = 4);

struct GroupAssignment {
    std::map<int, int> group_of;            // machine_id -> group
    std::map<int, bool> flagged;            // machine had no normal records
};

// Majority rule over a machine's records; ties break toward the lower group
// id. Points must already be normalized with the run's stats.
GroupAssignment assign_groups(
    const std::map<int, std::vector<Point>>& machine_points,
    const GlobalCentroids& global);

int nearest_centroid(const Point& p, const std::vector<Point>& centroids);

// Centroid export consumed by deployment flows (new-machine assignment).
void save_centroids_json(const std::string& path,
                         const FederatedKmeansResult& result);
FederatedKmeansResult load_centroids_json(const std::string& path);

void apply_normalization(const NormalizeStats& stats, Point& p);

}  // namespace fedclust
}  // namespace fspn
