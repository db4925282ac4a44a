#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "perchom/lattice.hpp"

namespace perchom {

enum class Law { BernoulliUnit, UniformOnLambdaOne };

std::string law_tag(Law law);
Law law_from_tag(const std::string& tag);

// i.i.d. conductances on the bonds of a box, values in {0} u [lambda, 1].
// The value at a bond is a pure function of (seed, absolute base coordinate,
// direction, law), so sub-boxes of a common seed agree on shared bonds.
struct Environment {
    LatticeBox box;
    double p = 1.0;
    double lambda = 1.0;
    Law law = Law::BernoulliUnit;
    std::uint64_t seed = 0;

    // cond[k-1][base_index]: conductance of the bond (base, base+e_k); zero
    // when the bond is closed or the base is on the far face of axis k-1.
    // This layout feeds the stencil kernels directly.
    std::vector<std::vector<double>> cond;

    double conductance(std::int64_t base_index, int k) const {
        return cond[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(base_index)];
    }

    // Sum of incident conductances at a vertex.
    double vertex_rate(std::int64_t idx) const;
};

// Value of the bond at absolute base coordinate `base` in direction k; pure.
double bond_conductance(std::uint64_t seed, double p, double lambda, Law law,
                        const Coord& base, int k);

Environment generate_environment(const LatticeBox& box, double p, double lambda,
                                 Law law, std::uint64_t seed);

// d=2 experiments refuse p <= 0.51 unless forced (p_c(Z^2) = 1/2).
void subcritical_guard(int d, double p, bool force);

// "PERCENV v1" file format. Header line, then little-endian float64 per bond
// in canonical order (direction k=1..d, then base vertices row-major).
void save_environment(const Environment& env, const std::string& path);
Environment load_environment(const std::string& path);

// Derived per-sample seed for experiment replicas.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Counter-based uniform draw in [0,1); pure function of its inputs.
double hash_uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                    std::uint64_t d);

} // namespace perchom
