#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mars::diversity {

struct ClusterProfile {
    std::vector<int> sizes;

    [[nodiscard]] int total() const;
    [[nodiscard]] int clusters() const noexcept { return static_cast<int>(sizes.size()); }
    /// Throws InvalidArgument on empty profiles or non-positive sizes.
    void validate() const;
};

using Vector = std::vector<double>;

/// 1 - C(n-c, k) / C(n, k).
[[nodiscard]] double pass_at_k(int n, int c, int k);

/// Expected number of distinct clusters in a uniform K-subset.
[[nodiscard]] double da_at_k(const ClusterProfile& profile, int k);

/// exp of the Shannon entropy of the cluster frequencies.
[[nodiscard]] double ea(const ClusterProfile& profile);

/// Sum of da_at_k for k = 1..k_max, divided by k_max - 1. Throws
/// DegenerateDenominator for k_max < 2.
[[nodiscard]] double naudc(const ClusterProfile& profile, int k_max);

/// DBSCAN labels for one point set: cluster ids from 0, noise as -1.
/// A core point has at least min_pts points (itself included) within eps.
[[nodiscard]] std::vector<int> dbscan(const std::vector<Vector>& points, double eps, int min_pts);

/// Clusters in one point set, each noise point counting as its own cluster.
[[nodiscard]] int count_clusters(const std::vector<Vector>& points, double eps, int min_pts);

/// Mean of count_clusters over tasks. Throws InvalidArgument on an empty
/// task list or an empty task.
[[nodiscard]] double aec(const std::vector<std::vector<Vector>>& per_task, double eps, int min_pts);

struct GVendiResult {
    double score = 1.0;
    int dropped = 0;  // zero vectors skipped
};

/// Vendi score of unit-normalized vectors after a seeded Gaussian projection
/// to proj_dim dimensions. Throws InvalidArgument if no non-zero vector
/// remains or proj_dim < 1.
[[nodiscard]] GVendiResult g_vendi(const std::vector<Vector>& vectors, int proj_dim, std::uint64_t seed);

/// Vendi score of unit-normalized vectors without projection.
[[nodiscard]] double vendi_exact(const std::vector<Vector>& vectors);

/// Oracle deciding whether solutions i and j are equivalent.
using EquivalenceOracle = std::function<bool(std::size_t, std::size_t)>;

struct Partition {
    std::vector<int> labels;  // cluster of each item, numbered by first appearance
    ClusterProfile profile;
};

/// Groups n items by the transitive closure of `oracle`. Throws
/// InvalidArgument if the oracle is not reflexive or not symmetric.
[[nodiscard]] Partition cluster_by_equivalence(std::size_t n, const EquivalenceOracle& oracle);

/// Profile from explicit labels (any strings), sizes in first-appearance order.
[[nodiscard]] ClusterProfile profile_from_labels(const std::vector<std::string>& labels);

/// Vectors file: header task_id,kind,values... then one row per vector with
/// the values spread over the remaining columns. kind is embedding or gradient.
struct VectorFileEntry {
    std::string kind;
    std::vector<Vector> vectors;
};
[[nodiscard]] std::map<std::string, VectorFileEntry> read_vectors(std::istream& in);
void write_vectors(std::ostream& out, const std::map<std::string, VectorFileEntry>& sets);

/// Clusters file: header task_id,solution_id,cluster_label.
[[nodiscard]] std::map<std::string, ClusterProfile> read_clusters(std::istream& in);

}  // namespace mars::diversity
