#pragma once

#include <cstdint>
#include <vector>

#include "perchom/environment.hpp"

namespace perchom {

// Connected components of the open-bond graph. label[v] = -1 for vertices
// with no incident open bond; otherwise components are numbered by the
// row-major index of their smallest vertex, so the labeling is independent
// of traversal order. The proxy component is the largest one (ties go to the
// component with the lexicographically smallest member).
struct ClusterLabeling {
    std::vector<std::int32_t> label;
    std::vector<std::int64_t> comp_size;
    std::int32_t proxy_label = -1;

    bool on_proxy(std::int64_t v) const {
        return proxy_label >= 0 && label[static_cast<std::size_t>(v)] == proxy_label;
    }
    std::int64_t proxy_size() const {
        return proxy_label >= 0 ? comp_size[static_cast<std::size_t>(proxy_label)] : 0;
    }
};

ClusterLabeling label_clusters(const Environment& env);

struct ThetaEstimate {
    double theta = 0.0;
    double ci_halfwidth = 0.0; // 95% normal approximation
    int n_samples = 0;
};

// Central window of side max(1, side/2), used to suppress boundary effects
// when reading cluster densities off a finite box.
struct CentralWindow {
    std::int64_t lo, hi; // per-axis [lo, hi)
};
CentralWindow central_window(std::int64_t side);

// Density of the proxy component within the central window.
double proxy_density_central(const Environment& env, const ClusterLabeling& lab);

ThetaEstimate estimate_theta(int d, double p, std::int64_t box_side, int n_samples,
                             std::uint64_t seed, Law law = Law::BernoulliUnit,
                             double lambda = 1.0, bool force = false);

struct DensityScalingReport {
    std::vector<int> levels;
    std::vector<int> n_samples;
    std::vector<double> mean_density;
    std::vector<double> std_density;
    bool degenerate = false; // all stds zero or a single level: no slope
    double slope = 0.0;      // d ln(std) / d (m ln 3)
    double intercept = 0.0;
};

DensityScalingReport density_scaling_experiment(int d, double p, int m_lo, int m_hi,
                                                int n_samples, std::uint64_t seed,
                                                Law law = Law::BernoulliUnit,
                                                double lambda = 1.0,
                                                bool force = false);

} // namespace perchom
