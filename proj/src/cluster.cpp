#include "perchom/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace perchom {

namespace {

struct UnionFind {
    std::vector<std::int64_t> parent;

    explicit UnionFind(std::int64_t n) : parent(static_cast<std::size_t>(n)) {
        std::iota(parent.begin(), parent.end(), std::int64_t{0});
    }

    std::int64_t find(std::int64_t x) {
        std::int64_t root = x;
        while (parent[static_cast<std::size_t>(root)] != root)
            root = parent[static_cast<std::size_t>(root)];
        while (parent[static_cast<std::size_t>(x)] != root) {
            std::int64_t next = parent[static_cast<std::size_t>(x)];
            parent[static_cast<std::size_t>(x)] = root;
            x = next;
        }
        return root;
    }

    // Union by smaller index so the final root is the minimal vertex.
    void unite(std::int64_t a, std::int64_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[static_cast<std::size_t>(b)] = a;
        else parent[static_cast<std::size_t>(a)] = b;
    }
};

} // namespace

ClusterLabeling label_clusters(const Environment& env) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    UnionFind uf(n);
    std::vector<std::uint8_t> touched(static_cast<std::size_t>(n), 0);

    for (int k = 1; k <= box.d; ++k) {
        const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
        const std::int64_t s = box.stride(k - 1);
        for (std::int64_t i = 0; i < n; ++i) {
            if (w[static_cast<std::size_t>(i)] != 0.0) {
                uf.unite(i, i + s);
                touched[static_cast<std::size_t>(i)] = 1;
                touched[static_cast<std::size_t>(i + s)] = 1;
            }
        }
    }

    ClusterLabeling lab;
    lab.label.assign(static_cast<std::size_t>(n), -1);

    // Roots are minimal vertices; enumerate them in index order for canonical
    // component numbering.
    std::vector<std::int64_t> root_of(static_cast<std::size_t>(n), -1);
    std::int32_t next = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (!touched[static_cast<std::size_t>(i)]) continue;
        std::int64_t r = uf.find(i);
        if (r == i) {
            root_of[static_cast<std::size_t>(i)] = next++;
            lab.comp_size.push_back(0);
        }
        std::int32_t id = static_cast<std::int32_t>(root_of[static_cast<std::size_t>(r)]);
        lab.label[static_cast<std::size_t>(i)] = id;
        lab.comp_size[static_cast<std::size_t>(id)] += 1;
    }

    // Largest component; ties resolved toward the smaller label, whose
    // minimal member is lexicographically smallest.
    std::int64_t best = 0;
    for (std::size_t c = 0; c < lab.comp_size.size(); ++c) {
        if (lab.comp_size[c] > best) {
            best = lab.comp_size[c];
            lab.proxy_label = static_cast<std::int32_t>(c);
        }
    }
    return lab;
}

CentralWindow central_window(std::int64_t side) {
    std::int64_t w = std::max<std::int64_t>(1, side / 2);
    std::int64_t lo = (side - w) / 2;
    return {lo, lo + w};
}

double proxy_density_central(const Environment& env, const ClusterLabeling& lab) {
    const LatticeBox& box = env.box;
    if (lab.proxy_label < 0) return 0.0;
    std::int64_t count = 0, total = 0;
    const std::int64_t n = box.vertex_count();
    for (std::int64_t i = 0; i < n; ++i) {
        Coord c = box.local_of_index(i);
        bool inside = true;
        for (int a = 0; a < box.d; ++a) {
            const CentralWindow wa = central_window(box.sides[a]);
            if (c[a] < wa.lo || c[a] >= wa.hi) {
                inside = false;
                break;
            }
        }
        if (!inside) continue;
        ++total;
        if (lab.on_proxy(i)) ++count;
    }
    return total > 0 ? double(count) / double(total) : 0.0;
}

ThetaEstimate estimate_theta(int d, double p, std::int64_t box_side, int n_samples,
                             std::uint64_t seed, Law law, double lambda, bool force) {
    if (n_samples < 1) throw ParamError("n_samples must be >= 1");
    subcritical_guard(d, p, force);

    const LatticeBox box = LatticeBox::square(d, box_side);
    std::vector<double> vals(static_cast<std::size_t>(n_samples));
    for (int s = 0; s < n_samples; ++s) {
        Environment env = generate_environment(
            box, p, lambda, law, derive_seed(seed, static_cast<std::uint64_t>(s)));
        ClusterLabeling lab = label_clusters(env);
        vals[static_cast<std::size_t>(s)] = proxy_density_central(env, lab);
    }
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= double(n_samples);
    double var = 0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var = n_samples > 1 ? var / double(n_samples - 1) : 0.0;

    ThetaEstimate est;
    est.theta = mean;
    est.ci_halfwidth = 1.959963984540054 * std::sqrt(var / double(n_samples));
    est.n_samples = n_samples;
    return est;
}

DensityScalingReport density_scaling_experiment(int d, double p, int m_lo, int m_hi,
                                                int n_samples, std::uint64_t seed,
                                                Law law, double lambda, bool force) {
    if (n_samples < 10) throw StatsError("density scaling needs >= 10 samples");
    if (m_lo < 1 || m_hi < m_lo) throw ParamError("bad level range");
    subcritical_guard(d, p, force);

    DensityScalingReport rep;
    for (int m = m_lo; m <= m_hi; ++m) {
        const std::int64_t block = pow3(m);
        // Sample the block density from a box twice the block side; the proxy
        // of the padded box stands in for the infinite cluster.
        const std::int64_t side = 2 * block;
        const LatticeBox box = LatticeBox::square(d, side);
        const std::int64_t lo = (side - block) / 2, hi = lo + block;

        std::vector<double> dens(static_cast<std::size_t>(n_samples));
        for (int s = 0; s < n_samples; ++s) {
            Environment env = generate_environment(
                box, p, lambda, law,
                derive_seed(seed, (static_cast<std::uint64_t>(m) << 32) |
                                      static_cast<std::uint64_t>(s)));
            ClusterLabeling lab = label_clusters(env);
            std::int64_t count = 0;
            const std::int64_t n = box.vertex_count();
            for (std::int64_t i = 0; i < n; ++i) {
                Coord c = box.local_of_index(i);
                bool inside = true;
                for (int a = 0; a < d; ++a)
                    if (c[a] < lo || c[a] >= hi) { inside = false; break; }
                if (inside && lab.on_proxy(i)) ++count;
            }
            double vol = 1;
            for (int a = 0; a < d; ++a) vol *= double(block);
            dens[static_cast<std::size_t>(s)] = double(count) / vol;
        }
        double mean = 0;
        for (double v : dens) mean += v;
        mean /= double(n_samples);
        double var = 0;
        for (double v : dens) var += (v - mean) * (v - mean);
        var /= double(n_samples - 1);

        rep.levels.push_back(m);
        rep.n_samples.push_back(n_samples);
        rep.mean_density.push_back(mean);
        rep.std_density.push_back(std::sqrt(var));
    }

    // Least squares of ln(std) on m ln 3; degenerate when a std vanishes or
    // only one level is present.
    rep.degenerate = rep.levels.size() < 2;
    for (double s : rep.std_density)
        if (s <= 0.0) rep.degenerate = true;
    if (!rep.degenerate) {
        const double ln3 = std::log(3.0);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = double(rep.levels.size());
        for (std::size_t i = 0; i < rep.levels.size(); ++i) {
            double x = rep.levels[i] * ln3;
            double y = std::log(rep.std_density[i]);
            sx += x; sy += y; sxx += x * x; sxy += x * y;
        }
        rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        rep.intercept = (sy - rep.slope * sx) / n;
    }
    return rep;
}

} // namespace perchom
