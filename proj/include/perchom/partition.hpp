#pragma once

#include <cstdint>
#include <vector>

#include "perchom/cluster.hpp"
#include "perchom/operator.hpp"

namespace perchom {

struct CubeClassification {
    TriadicCube cube;
    bool pregood = false;
    bool good = false;
    std::int64_t crossing_rep = -1; // min box index of the crossing cluster
};

// Def 2.1 / Def 2.2 classification. Requires the cube and its checking
// family (sub-cubes with side in [max(3, ceil(N/10)), N] intersecting it,
// anchors subsampled at stride max(1, N/30)) to lie inside the box.
CubeClassification classify_cube(const Environment& env, const TriadicCube& cube,
                                 int stride_override = 0);

struct PartitionElement {
    TriadicCube cube;
    std::int64_t inbox_count = 0;
};

struct TriadicPartition {
    LatticeBox box;
    int m_cap = 2;
    std::vector<std::uint8_t> level;   // per-vertex element level
    std::vector<std::int32_t> elem_id; // per-vertex element index
    std::vector<PartitionElement> elements;

    // Cubes whose goodness was fully evaluable during the build, for the
    // connectivity diagnostics.
    std::vector<CubeClassification> classified;

    std::int64_t size_at(std::int64_t vertex_index) const {
        return pow3(level[static_cast<std::size_t>(vertex_index)]);
    }
};

// Stopping-time construction: per-vertex required level = topmost fully
// evaluable bad cube (levels 1..m_cap; clipped cubes are exempt), at least 1
// off the proxy cluster; then triadic consistency and 3:1 neighbor balancing.
// Every strict predecessor of an element that is fully evaluable is good by
// construction.
TriadicPartition build_partition(const Environment& env, const ClusterLabeling& lab,
                                 int m_cap = 2, int stride_override = 0);

// [u]_P: u(x) on the proxy cluster; off the cluster the value is read at
// z(x), the point of the element's crossing cluster (restricted to the
// proxy) closest to the cube center, lexicographic ties; falls back to the
// closest in-element proxy vertex, then to parent cubes.
Field coarsen(const Field& u, const Environment& env, const TriadicPartition& part,
              const ClusterLabeling& lab);

struct PartitionStats {
    std::vector<double> radii;
    std::vector<double> moment_sum; // R^-d sum over B_R of size^q
    std::vector<std::int64_t> max_size;
    std::vector<std::int64_t> tail_sizes;  // sizes present
    std::vector<double> tail_prob;         // P[size(box_P(x)) >= s]
    double q = 0.0;
};

PartitionStats partition_stats(const TriadicPartition& part, double q);

struct ConnectivityReport {
    std::int64_t element_pairs_checked = 0;
    std::int64_t element_pair_violations = 0;
    std::int64_t cube_pairs_checked = 0;
    std::int64_t cube_pair_violations = 0;
};

// Lemma-2.3 style check: for adjacent good cubes of comparable size, the two
// crossing clusters lie in a common cluster of the union.
ConnectivityReport check_connectivity(const Environment& env,
                                      const TriadicPartition& part);

struct PartitionInvariantReport {
    bool tiling = false;
    bool neighbor_ratio = false;
    bool predecessor_goodness = false;
};

PartitionInvariantReport verify_partition_invariants(const Environment& env,
                                                     const TriadicPartition& part);

} // namespace perchom
