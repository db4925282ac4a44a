#include "perchom/parabolic.hpp"

#include <algorithm>
#include <cmath>

#include "perchom/simd/kernels.hpp"

namespace perchom {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Largest Lambda*t the uniformization series will attempt; beyond this the
// term count makes the run infeasible and the caller must split the horizon.
constexpr double kMaxLambdaT = 5e7;

} // namespace

Field evolve_field(const GraphOperator& op, const Field& init, double duration,
                   double tol, double* mass_defect_bound, int* terms) {
    if (duration < 0.0) throw ParamError("duration must be >= 0");
    if (tol <= 0.0) throw ParamError("tolerance must be positive");
    const std::size_t n = init.size();
    const auto& K = simd::active();

    const double lambda = op.max_rate();
    const double lt = lambda * duration;
    if (lt > kMaxLambdaT)
        throw OverflowError("Lambda*t too large for the uniformization series");

    if (lt == 0.0) {
        if (mass_defect_bound) *mass_defect_bound = 0.0;
        if (terms) *terms = 0;
        return init;
    }

    Field v = init;          // P^k applied to init
    Field next(n, 0.0);
    Field acc(n, 0.0);

    // Poisson weights in log form: lw_0 = -lt, lw_{k+1} = lw_k + ln(lt/(k+1)).
    // The recurrence carries a rounding drift of order 1e-15 * lt in the
    // accumulated mass, which floors the reachable defect on long horizons.
    const double fp_floor = 2e-15 * lt;
    double lw = -lt;
    double cumulative = 0.0;
    const double llt = std::log(lt);
    int k = 0;
    while (true) {
        const double w = std::exp(lw);
        if (w > 0.0) {
            K.axpy(w, v.data(), acc.data(), n);
            cumulative += w;
        }
        if (cumulative >= 1.0 - tol) break;
        if (double(k) > lt && w < 1e-16 * cumulative) {
            // Series exhausted; the remaining deficit is tail + rounding.
            if (1.0 - cumulative > std::max(tol, fp_floor))
                throw OverflowError(
                    "requested tolerance is below the floating-point floor "
                    "for this horizon");
            break;
        }
        // P v = v + (1/Lambda) L v
        op.apply(v, next);
        K.axpy(1.0 / lambda, next.data(), v.data(), n);
        ++k;
        lw += llt - std::log(double(k));
        if (k > static_cast<int>(lt + 40.0 * std::sqrt(lt) + 64.0))
            throw OverflowError("uniformization series failed to accumulate mass");
    }
    if (mass_defect_bound) *mass_defect_bound = std::max(0.0, 1.0 - cumulative);
    if (terms) *terms = k + 1;
    return acc;
}

Field evolve_field_rk(const GraphOperator& op, const Field& init,
                      double duration, double tol, int* steps) {
    // Cash-Karp embedded Runge-Kutta 4(5) with elementary step control.
    const std::size_t n = init.size();
    const auto& K = simd::active();

    static const double a2 = 1.0 / 5, a3 = 3.0 / 10, a4 = 3.0 / 5, a5 = 1.0,
                        a6 = 7.0 / 8;
    static const double b21 = 1.0 / 5;
    static const double b31 = 3.0 / 40, b32 = 9.0 / 40;
    static const double b41 = 3.0 / 10, b42 = -9.0 / 10, b43 = 6.0 / 5;
    static const double b51 = -11.0 / 54, b52 = 5.0 / 2, b53 = -70.0 / 27,
                        b54 = 35.0 / 27;
    static const double b61 = 1631.0 / 55296, b62 = 175.0 / 512,
                        b63 = 575.0 / 13824, b64 = 44275.0 / 110592,
                        b65 = 253.0 / 4096;
    static const double c1 = 37.0 / 378, c3 = 250.0 / 621, c4 = 125.0 / 594,
                        c6 = 512.0 / 1771;
    static const double d1 = 2825.0 / 27648, d3 = 18575.0 / 48384,
                        d4 = 13525.0 / 55296, d5 = 277.0 / 14336, d6 = 1.0 / 4;
    (void)a2; (void)a3; (void)a4; (void)a5; (void)a6;

    Field u = init;
    Field k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), tmp(n), u5(n);

    double t = 0.0;
    const double lambda = std::max(op.max_rate(), 1e-12);
    double h = std::min(duration, 0.5 / lambda);
    int accepted = 0;

    auto stage = [&](const Field& base, Field& out) { op.apply(base, out); };

    while (t < duration) {
        h = std::min(h, duration - t);
        stage(u, k1);

        tmp = u;
        K.axpy(h * b21, k1.data(), tmp.data(), n);
        stage(tmp, k2);

        tmp = u;
        K.axpy(h * b31, k1.data(), tmp.data(), n);
        K.axpy(h * b32, k2.data(), tmp.data(), n);
        stage(tmp, k3);

        tmp = u;
        K.axpy(h * b41, k1.data(), tmp.data(), n);
        K.axpy(h * b42, k2.data(), tmp.data(), n);
        K.axpy(h * b43, k3.data(), tmp.data(), n);
        stage(tmp, k4);

        tmp = u;
        K.axpy(h * b51, k1.data(), tmp.data(), n);
        K.axpy(h * b52, k2.data(), tmp.data(), n);
        K.axpy(h * b53, k3.data(), tmp.data(), n);
        K.axpy(h * b54, k4.data(), tmp.data(), n);
        stage(tmp, k5);

        tmp = u;
        K.axpy(h * b61, k1.data(), tmp.data(), n);
        K.axpy(h * b62, k2.data(), tmp.data(), n);
        K.axpy(h * b63, k3.data(), tmp.data(), n);
        K.axpy(h * b64, k4.data(), tmp.data(), n);
        K.axpy(h * b65, k5.data(), tmp.data(), n);
        stage(tmp, k6);

        u5 = u;
        K.axpy(h * c1, k1.data(), u5.data(), n);
        K.axpy(h * c3, k3.data(), u5.data(), n);
        K.axpy(h * c4, k4.data(), u5.data(), n);
        K.axpy(h * c6, k6.data(), u5.data(), n);

        tmp = u;
        K.axpy(h * d1, k1.data(), tmp.data(), n);
        K.axpy(h * d3, k3.data(), tmp.data(), n);
        K.axpy(h * d4, k4.data(), tmp.data(), n);
        K.axpy(h * d5, k5.data(), tmp.data(), n);
        K.axpy(h * d6, k6.data(), tmp.data(), n);

        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            err = std::max(err, std::abs(u5[i] - tmp[i]));

        const double local_tol = tol * std::max(h / std::max(duration, 1e-300), 1e-16);
        if (err <= local_tol || h <= 1e-12) {
            u = u5;
            t += h;
            ++accepted;
        }
        const double ratio = err > 0.0 ? 0.9 * std::pow(local_tol / err, 0.2) : 2.0;
        h *= std::clamp(ratio, 0.2, 2.0);
        if (accepted > 10'000'000) throw OverflowError("rk integrator stalled");
    }
    if (steps) *steps = accepted;
    return u;
}

KernelSnapshot evolve_kernel(const Environment& env, const ClusterLabeling& lab,
                             const Coord& y, double t, EvolveMethod method,
                             double tol) {
    if (t < 0.0) throw ParamError("t must be >= 0");
    if (!env.box.contains(y)) throw GeometryError("y outside the box");
    const std::int64_t yi = env.box.index_of(y);
    if (!lab.on_proxy(yi)) throw ParamError("y must lie on the proxy cluster");

    GraphOperator op(env, proxy_mask(env, lab));
    Field init(static_cast<std::size_t>(env.box.vertex_count()), 0.0);
    init[static_cast<std::size_t>(yi)] = 1.0;

    KernelSnapshot snap;
    snap.t = t;
    snap.y_index = yi;
    snap.method = method;
    if (method == EvolveMethod::RkIntegrator) {
        int steps = 0;
        snap.values = evolve_field_rk(op, init, t, tol, &steps);
        snap.terms = steps;
    } else if (method == EvolveMethod::MonteCarlo) {
        // Endpoint histogram of VSRW replicas; the replica count is chosen so
        // the per-site binomial error scale is about tol.
        const int replicas = static_cast<int>(
            std::min(1e8, std::max(1000.0, 1.0 / (tol * tol))));
        WalkSample ws = sample_walks(env, lab, y, t, WalkType::VSRW, replicas,
                                     env.seed ^ 0x6d63ULL);
        snap.values.assign(init.size(), 0.0);
        for (std::int64_t e : ws.endpoints)
            snap.values[static_cast<std::size_t>(e)] += 1.0 / double(replicas);
        snap.terms = replicas;
    } else {
        double defect = 0.0;
        int terms = 0;
        snap.values = evolve_field(op, init, t, tol, &defect, &terms);
        snap.mass_defect_bound = defect;
        snap.terms = terms;
    }
    return snap;
}

double homogenized_kernel_r2(double sigma2, double t, double r2, int d) {
    if (t <= 0.0) throw ParamError("t must be positive");
    const double denom = 2.0 * kPi * sigma2 * t;
    return std::pow(denom, -0.5 * d) * std::exp(-r2 / (2.0 * sigma2 * t));
}

double homogenized_kernel(double sigma2, double t, const double* x, int d) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += x[a] * x[a];
    return homogenized_kernel_r2(sigma2, t, r2, d);
}

EnvelopeValue envelope(double C, double t, double r, int d) {
    if (C <= 0.0) throw ParamError("C must be positive");
    if (t <= 0.0) throw ParamError("t must be positive");
    double psi;
    if (r <= t) {
        psi = -std::log(C) + 0.5 * d * std::log(t) + r * r / (C * t);
    } else {
        psi = -std::log(C) + 0.5 * d * std::log(t) +
              (r / C) * (1.0 + std::log(r / t));
    }
    return {std::exp(-psi), psi};
}

namespace {

struct WalkRng {
    std::uint64_t state;

    explicit WalkRng(std::uint64_t s) : state(s ? s : 0x853c49e6748fea9bULL) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double exponential(double rate) {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return -std::log(u) / rate;
    }
};

} // namespace

WalkSample sample_walks(const Environment& env, const ClusterLabeling& lab,
                        const Coord& y, double t_or_steps, WalkType type,
                        int n_replicas, std::uint64_t seed) {
    if (!env.box.contains(y)) throw GeometryError("y outside the box");
    const std::int64_t yi = env.box.index_of(y);
    if (!lab.on_proxy(yi)) throw ParamError("y must lie on the proxy cluster");

    const LatticeBox& box = env.box;
    GraphOperator op(env, proxy_mask(env, lab));

    WalkSample ws;
    ws.type = type;
    ws.y_index = yi;
    ws.horizon = t_or_steps;
    ws.seed = seed;
    ws.endpoints.resize(static_cast<std::size_t>(n_replicas));

    // Neighbor scan order is fixed (directions 1..d, forward then backward).
    auto neighbor_rates = [&](std::int64_t x, std::array<double, 6>& rate,
                              std::array<std::int64_t, 6>& nbr) {
        const Coord c = box.local_of_index(x);
        int cnt = 0;
        for (int k = 1; k <= box.d; ++k) {
            const auto& w = op.weights[static_cast<std::size_t>(k - 1)];
            const std::int64_t s = box.stride(k - 1);
            if (c[k - 1] < box.sides[k - 1] - 1 &&
                w[static_cast<std::size_t>(x)] > 0.0) {
                rate[cnt] = w[static_cast<std::size_t>(x)];
                nbr[cnt++] = x + s;
            }
            if (c[k - 1] > 0 && w[static_cast<std::size_t>(x - s)] > 0.0) {
                rate[cnt] = w[static_cast<std::size_t>(x - s)];
                nbr[cnt++] = x - s;
            }
        }
        return cnt;
    };

    for (int r = 0; r < n_replicas; ++r) {
        WalkRng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        std::int64_t x = yi;
        std::array<double, 6> rate;
        std::array<std::int64_t, 6> nbr;

        if (type == WalkType::SRW) {
            const int steps = static_cast<int>(t_or_steps);
            for (int s = 0; s < steps; ++s) {
                int cnt = neighbor_rates(x, rate, nbr);
                if (cnt == 0) break;
                double total = 0.0;
                for (int i = 0; i < cnt; ++i) total += rate[i];
                double u = rng.uniform() * total;
                int pick = cnt - 1;
                for (int i = 0; i < cnt; ++i) {
                    if (u < rate[i]) { pick = i; break; }
                    u -= rate[i];
                }
                x = nbr[pick];
            }
        } else {
            double clock = 0.0;
            while (true) {
                int cnt = neighbor_rates(x, rate, nbr);
                if (cnt == 0) break;
                double total = 0.0;
                for (int i = 0; i < cnt; ++i) total += rate[i];
                const double hold =
                    type == WalkType::VSRW ? rng.exponential(total)
                                           : rng.exponential(1.0);
                clock += hold;
                if (clock > t_or_steps) break;
                double u = rng.uniform() * total;
                int pick = cnt - 1;
                for (int i = 0; i < cnt; ++i) {
                    if (u < rate[i]) { pick = i; break; }
                    u -= rate[i];
                }
                x = nbr[pick];
            }
        }
        ws.endpoints[static_cast<std::size_t>(r)] = x;
    }
    return ws;
}

BoundReport check_kernel_bounds(const Environment& env, const ClusterLabeling& lab,
                                const KernelSnapshot& snap,
                                const std::vector<double>& C_grid) {
    const LatticeBox& box = env.box;
    const double t = snap.t;
    const Coord y = box.coord_of_index(snap.y_index);
    const int d = box.d;

    std::vector<double> grid = C_grid;
    std::sort(grid.begin(), grid.end());

    BoundReport rep;
    const std::int64_t n = box.vertex_count();

    auto cv_bound = [&](double C, double r) {
        if (r <= t) return C * std::exp(-r * r / (C * t));
        return C * std::exp(-(r / C) * (1.0 + std::log(r / t)));
    };

    for (double C : grid) {
        bool ok = true;
        for (std::int64_t i = 0; i < n && ok; ++i) {
            if (!lab.on_proxy(i)) continue;
            const double p = snap.values[static_cast<std::size_t>(i)];
            if (p <= 0.0) continue;
            const double r =
                std::sqrt(l2_dist_sq(box.coord_of_index(i), y, d));
            if (p > cv_bound(C, r)) ok = false;
        }
        if (ok) { rep.carne_varopoulos_C = C; break; }
    }
    for (double C : grid) {
        bool ok = true;
        for (std::int64_t i = 0; i < n && ok; ++i) {
            if (!lab.on_proxy(i)) continue;
            const double p = snap.values[static_cast<std::size_t>(i)];
            if (p <= 0.0) continue;
            const double r =
                std::sqrt(l2_dist_sq(box.coord_of_index(i), y, d));
            if (p > envelope(C, t, r, d).phi) ok = false;
        }
        if (ok) { rep.barlow_C = C; break; }
    }

    if (rep.carne_varopoulos_C < 0.0 || rep.barlow_C < 0.0) {
        const double cmax = grid.empty() ? 0.0 : grid.back();
        for (std::int64_t i = 0; i < n; ++i) {
            if (!lab.on_proxy(i)) continue;
            const double p = snap.values[static_cast<std::size_t>(i)];
            if (p <= 0.0) continue;
            const double r =
                std::sqrt(l2_dist_sq(box.coord_of_index(i), y, d));
            if (rep.carne_varopoulos_C < 0.0 && p > cv_bound(cmax, r))
                rep.cv_violations.push_back(i);
            if (rep.barlow_C < 0.0 && p > envelope(cmax, t, r, d).phi)
                rep.barlow_violations.push_back(i);
        }
    }
    return rep;
}

std::vector<double> gradient_profile(const Environment& env,
                                     const ClusterLabeling& lab,
                                     const KernelSnapshot& snap,
                                     const Coord& center,
                                     const std::vector<double>& radii) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    std::vector<double> out;
    out.reserve(radii.size());

    for (double r : radii) {
        double acc = 0.0;
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (!lab.on_proxy(i)) continue;
            const Coord c = box.coord_of_index(i);
            if (l2_dist_sq(c, center, box.d) > r * r) continue;
            ++count;
            // |grad u|(x) = sum over open incident bonds of |u(z)-u(x)|.
            double g = 0.0;
            const Coord lc = box.local_of_index(i);
            for (int k = 1; k <= box.d; ++k) {
                const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
                const std::int64_t s = box.stride(k - 1);
                if (lc[k - 1] < box.sides[k - 1] - 1 &&
                    w[static_cast<std::size_t>(i)] != 0.0 && lab.on_proxy(i + s))
                    g += std::abs(snap.values[static_cast<std::size_t>(i + s)] -
                                  snap.values[static_cast<std::size_t>(i)]);
                if (lc[k - 1] > 0 && w[static_cast<std::size_t>(i - s)] != 0.0 &&
                    lab.on_proxy(i - s))
                    g += std::abs(snap.values[static_cast<std::size_t>(i - s)] -
                                  snap.values[static_cast<std::size_t>(i)]);
            }
            acc += g * g;
        }
        out.push_back(count > 0 ? std::sqrt(acc / double(count)) : 0.0);
    }
    return out;
}

double gaussian_mass(const Environment& env, const ClusterLabeling& lab,
                     double sigma2, double theta_hat, double t, const Coord& y) {
    if (t <= 0.0) throw ParamError("t must be positive");
    const LatticeBox& box = env.box;
    // Padding check: the Gaussian mass outside the box must be negligible.
    double min_margin2 = 1e300;
    for (int a = 0; a < box.d; ++a) {
        const double lo = double(y[a] - box.origin[a]);
        const double hi = double(box.origin[a] + box.sides[a] - 1 - y[a]);
        min_margin2 = std::min(min_margin2, std::min(lo, hi));
    }
    const double tail = std::exp(-min_margin2 * min_margin2 / (2.0 * sigma2 * t));
    if (tail > 1e-9)
        throw QuadratureError("box too small for gaussian_mass at this t");

    double acc = 0.0;
    const std::int64_t n = box.vertex_count();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!lab.on_proxy(i)) continue;
        const double r2 = l2_dist_sq(box.coord_of_index(i), y, box.d);
        acc += homogenized_kernel_r2(sigma2, t, r2, box.d);
    }
    return acc - theta_hat;
}

double scaled_bessel_i(int n, double z) {
    n = std::abs(n);
    if (z < 0.0) throw ParamError("z must be >= 0");
    if (z == 0.0) return n == 0 ? 1.0 : 0.0;

    if (z <= 30.0) {
        // Upward series with Kahan summation on e^{-z} (z/2)^{2m+n}/(m!(m+n)!).
        double term = std::exp(-z + n * std::log(0.5 * z) - std::lgamma(n + 1.0));
        double sum = 0.0, comp = 0.0;
        const double q = 0.25 * z * z;
        for (int m = 0; m < 400; ++m) {
            const double yk = term - comp;
            const double tk = sum + yk;
            comp = (tk - sum) - yk;
            sum = tk;
            term *= q / (double(m + 1) * double(m + n + 1));
            if (term < 1e-310) break;
        }
        return sum;
    }

    // Miller backward recurrence on the scaled values b_k = e^{-z} I_k(z),
    // normalized with b_0 + 2 sum_{k>=1} b_k = 1.
    const int start = n + static_cast<int>(2.0 * std::sqrt(40.0 * z)) + 40;
    double bkp1 = 0.0, bk = 1e-300, result = (n == start) ? bk : 0.0;
    double norm = 0.0;
    for (int k = start; k >= 1; --k) {
        const double bkm1 = bkp1 + (2.0 * k / z) * bk;
        bkp1 = bk;
        bk = bkm1;
        if (k - 1 == n) result = bk;
        if (k - 1 >= 1) norm += 2.0 * bk;
        // Rescale to avoid overflow of the unnormalized recurrence.
        if (bk > 1e280) {
            bk *= 1e-280;
            bkp1 *= 1e-280;
            result *= 1e-280;
            norm *= 1e-280;
        }
    }
    norm += bk; // b_0 term
    return result / norm;
}

double z2_unit_kernel(double t, std::int64_t x1, std::int64_t x2) {
    if (t == 0.0) return (x1 == 0 && x2 == 0) ? 1.0 : 0.0;
    return scaled_bessel_i(static_cast<int>(std::llabs(x1)), 2.0 * t) *
           scaled_bessel_i(static_cast<int>(std::llabs(x2)), 2.0 * t);
}

} // namespace perchom
