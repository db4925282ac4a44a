#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perchom/environment.hpp"

namespace perchom {

// Experiment configuration parsed from the "key = value" grammar: one pair
// per line, '#' comments, arrays as comma lists. Unknown keys are rejected.
struct ExperimentConfig {
    std::string experiment; // theta, density-scaling, partition, cell,
                            // corrector, flux-norm, kernel, walks, lclt,
                            // rate, green, dirichlet, report-all
    int d = 2;
    double p = 0.7;
    double lambda = 1.0;
    Law law = Law::BernoulliUnit;
    std::int64_t box_side = 81;
    std::uint64_t seed = 1;
    int n_seeds = 1;
    int n_samples = 100;
    std::vector<double> t_grid;
    std::vector<double> r_grid;
    int m = 3;
    int m_lo = 2, m_hi = 4;
    double q = 2.0;
    double delta = 0.4;
    double kappa = 0.1;
    double t = 100.0;
    double tol = 1e-10;
    double c0 = 16.0;     // Gaussian weight constant in LCLT sup norms
    double t_max = 0.0;   // green: defaults to 10*box_side
    double sigma2 = 0.0;  // 0 = estimate from cell problems
    double theta = 0.0;   // 0 = estimate
    int n_steps = 512;    // dirichlet time steps
    bool force = false;
    std::string out_dir = "out";
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& c);

} // namespace perchom
