#include "perchom/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <thread>

#include "perchom/simd/kernels.hpp"

#include "perchom/cluster.hpp"
#include "perchom/elliptic.hpp"
#include "perchom/homog.hpp"
#include "perchom/io.hpp"
#include "perchom/parabolic.hpp"
#include "perchom/partition.hpp"
#include "perchom/svg.hpp"

namespace perchom {

namespace {

constexpr const char* kVersion = "1.0.0";

int env_threads() {
    const char* v = std::getenv("PERCHOM_THREADS");
    if (v == nullptr) return 0;
    const int n = std::atoi(v);
    return n > 0 ? n : 1;
}

} // namespace

int thread_budget() {
    const int cap = env_threads();
    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int base = hw > 0 ? hw : 1;
    return cap > 0 ? std::min(cap, base) : base;
}

namespace {

void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(thread_budget(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& th : pool) th.join();
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Workspace {
    std::string dir;
    RunManifest manifest;
    std::chrono::steady_clock::time_point stage_start;
    std::string stage_name;

    explicit Workspace(const std::string& d) : dir(d) {
        std::filesystem::create_directories(dir);
    }

    void begin(const std::string& name) {
        stage_name = name;
        stage_start = std::chrono::steady_clock::now();
    }

    void end() {
        const auto dt = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - stage_start)
                            .count();
        manifest.stage_seconds.emplace_back(stage_name, dt);
    }

    std::string path(const std::string& name) const { return dir + "/" + name; }

    void write(const std::string& name, const std::string& content) {
        write_text_atomic(path(name), content);
        manifest.artifacts.emplace_back(name, fnv1a64_file(path(name)));
    }

    void note_artifact(const std::string& name) {
        manifest.artifacts.emplace_back(name, fnv1a64_file(path(name)));
    }

    void finish(const std::string& config_echo) {
        manifest.version = kVersion;
        manifest.config_echo = config_echo;
        std::ostringstream os;
        os << "PERCHOM run manifest\nversion = " << manifest.version << "\n";
        os << "[config]\n" << manifest.config_echo;
        os << "[artifacts]\n";
        for (const auto& [name, sum] : manifest.artifacts) {
            char hex[24];
            std::snprintf(hex, sizeof hex, "%016llx",
                          static_cast<unsigned long long>(sum));
            os << name << " fnv1a64=" << hex << "\n";
        }
        os << "[timing]\n";
        for (const auto& [name, sec] : manifest.stage_seconds)
            os << name << " seconds=" << format_double(sec) << "\n";
        write_text_atomic(path("manifest.txt"), os.str());
    }
};

Coord center_proxy_vertex(const Environment& env, const ClusterLabeling& lab) {
    const LatticeBox& box = env.box;
    Coord c{0, 0, 0};
    for (int a = 0; a < box.d; ++a) c[a] = box.origin[a] + box.sides[a] / 2;
    // Closest proxy vertex to the geometric center, lexicographic ties.
    const std::int64_t n = box.vertex_count();
    std::int64_t best = -1;
    double bd = 1e300;
    Coord bc{0, 0, 0};
    for (std::int64_t i = 0; i < n; ++i) {
        if (!lab.on_proxy(i)) continue;
        const Coord v = box.coord_of_index(i);
        const double dist = l2_dist_sq(v, c, box.d);
        if (dist < bd || (dist == bd && lex_less(v, bc, box.d))) {
            bd = dist;
            bc = v;
            best = i;
        }
    }
    if (best < 0) throw ParamError("environment has no proxy cluster");
    return bc;
}

// sigma2/theta calibration: config override, a == 1 shortcut, or estimates.
struct Calibration {
    double sigma2;
    double theta;
};

Calibration calibrate(const ExperimentConfig& c, Workspace& ws) {
    Calibration cal{c.sigma2, c.theta};
    if (cal.sigma2 > 0.0 && cal.theta > 0.0) return cal;
    if (c.p >= 1.0 && c.law == Law::BernoulliUnit) {
        if (cal.theta <= 0.0) cal.theta = 1.0;
        if (cal.sigma2 <= 0.0) cal.sigma2 = 2.0;
        return cal;
    }
    ws.begin("calibrate");
    HomogenizedParams hp = estimate_homogenized(
        c.d, c.p, c.lambda, c.law, std::min(c.m, 5), std::max(c.n_samples / 10, 8),
        derive_seed(c.seed, 0xca11), c.force);
    ThetaEstimate th =
        estimate_theta(c.d, c.p, std::min<std::int64_t>(c.box_side, 128), 64,
                       derive_seed(c.seed, 0x7e7a), c.law, c.lambda, c.force);
    if (cal.theta <= 0.0) cal.theta = th.theta;
    if (cal.sigma2 <= 0.0) {
        // The Dirichlet cell sequence decreases roughly geometrically in the
        // level; extrapolate with the observed ratio-1/3 step.
        double tr_m = 0, tr_prev = 0;
        for (int k = 0; k < c.d; ++k) {
            tr_m += hp.abar[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
            tr_prev +=
                hp.abar_prev[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
        }
        const double abar_ext =
            (tr_m - 0.5 * std::max(tr_prev - tr_m, 0.0)) / double(c.d);
        cal.sigma2 = 2.0 * abar_ext / cal.theta;
    }
    ws.end();
    CsvWriter csv({"sigma2", "theta"});
    csv.row({cal.sigma2, cal.theta});
    ws.write("calibration.csv", csv.str());
    return cal;
}

void run_theta(const ExperimentConfig& c, Workspace& ws) {
    ws.begin("theta");
    ThetaEstimate est = estimate_theta(c.d, c.p, c.box_side, c.n_samples, c.seed,
                                       c.law, c.lambda, c.force);
    ws.end();
    CsvWriter csv({"p", "box_side", "n_samples", "theta", "ci_halfwidth"});
    csv.row({c.p, double(c.box_side), double(est.n_samples), est.theta,
             est.ci_halfwidth});
    ws.write("theta.csv", csv.str());
}

void run_density_scaling(const ExperimentConfig& c, Workspace& ws) {
    ws.begin("density-scaling");
    DensityScalingReport rep = density_scaling_experiment(
        c.d, c.p, c.m_lo, c.m_hi, c.n_samples, c.seed, c.law, c.lambda, c.force);
    ws.end();
    CsvWriter csv({"m", "n_samples", "mean_density", "std_density"});
    for (std::size_t i = 0; i < rep.levels.size(); ++i)
        csv.row({double(rep.levels[i]), double(rep.n_samples[i]),
                 rep.mean_density[i], rep.std_density[i]});
    ws.write("density_scaling.csv", csv.str());

    std::ostringstream js;
    js << "{\n  \"degenerate\": " << (rep.degenerate ? "true" : "false")
       << ",\n  \"slope\": " << format_double(rep.slope)
       << ",\n  \"intercept\": " << format_double(rep.intercept) << "\n}\n";
    ws.write("summary.json", js.str());

    SvgSeries s;
    s.label = "std of block density";
    for (std::size_t i = 0; i < rep.levels.size(); ++i) {
        s.x.push_back(std::pow(3.0, rep.levels[i]));
        s.y.push_back(std::max(rep.std_density[i], 1e-300));
    }
    ws.write("density_scaling.svg",
             svg_line_chart("block density std vs scale", {s}, true, true));
}

void run_partition(const ExperimentConfig& c, Workspace& ws) {
    ws.begin("partition");
    Environment env = generate_environment(LatticeBox::square(c.d, c.box_side),
                                           c.p, c.lambda, c.law, c.seed);
    ClusterLabeling lab = label_clusters(env);
    TriadicPartition part = build_partition(env, lab);
    PartitionStats stats = partition_stats(part, c.q);
    PartitionInvariantReport inv = verify_partition_invariants(env, part);
    ConnectivityReport conn = check_connectivity(env, part);
    ws.end();

    {
        std::vector<std::string> cols{"level", "center_x", "center_y"};
        if (c.d == 3) cols.push_back("center_z");
        CsvWriter csv(cols);
        for (const auto& e : part.elements) {
            std::vector<double> row{double(e.cube.level), double(e.cube.center[0]),
                                    double(e.cube.center[1])};
            if (c.d == 3) row.push_back(double(e.cube.center[2]));
            csv.row(row);
        }
        ws.write("partition.csv", csv.str());
    }
    {
        CsvWriter csv({"R", "moment_sum", "max_size"});
        for (std::size_t i = 0; i < stats.radii.size(); ++i)
            csv.row({stats.radii[i], stats.moment_sum[i], double(stats.max_size[i])});
        ws.write("partition_stats.csv", csv.str());
    }
    {
        CsvWriter csv({"size", "tail_prob"});
        for (std::size_t i = 0; i < stats.tail_sizes.size(); ++i)
            csv.row({double(stats.tail_sizes[i]), stats.tail_prob[i]});
        ws.write("partition_tail.csv", csv.str());
    }
    {
        FieldFile f;
        f.d = c.d;
        f.sides = env.box.sides;
        f.method = "uniformization";
        f.values.resize(static_cast<std::size_t>(env.box.vertex_count()));
        for (std::size_t i = 0; i < f.values.size(); ++i)
            f.values[i] = double(part.size_at(static_cast<std::int64_t>(i)));
        f.mask = proxy_mask(env, lab);
        save_field(f, ws.path("partition_sizes.fld"));
        ws.note_artifact("partition_sizes.fld");
        ws.note_artifact("partition_sizes.fld.mask");
    }
    std::ostringstream js;
    js << "{\n  \"tiling\": " << (inv.tiling ? "true" : "false")
       << ",\n  \"neighbor_ratio\": " << (inv.neighbor_ratio ? "true" : "false")
       << ",\n  \"predecessor_goodness\": "
       << (inv.predecessor_goodness ? "true" : "false")
       << ",\n  \"connectivity_cube_pairs\": " << conn.cube_pairs_checked
       << ",\n  \"connectivity_cube_violations\": " << conn.cube_pair_violations
       << ",\n  \"connectivity_element_pairs\": " << conn.element_pairs_checked
       << ",\n  \"connectivity_element_violations\": "
       << conn.element_pair_violations << "\n}\n";
    ws.write("summary.json", js.str());
}

void run_cell(const ExperimentConfig& c, Workspace& ws) {
    ws.begin("cell");
    HomogenizedParams hp = estimate_homogenized(c.d, c.p, c.lambda, c.law, c.m,
                                                c.n_samples, c.seed, c.force);
    ws.end();
    std::vector<std::string> cols{"level"};
    for (int i = 0; i < c.d; ++i)
        for (int j = 0; j < c.d; ++j)
            cols.push_back("a_" + std::to_string(i + 1) + std::to_string(j + 1));
    cols.push_back("theta");
    cols.push_back("sigma2");
    CsvWriter csv(cols);
    auto emit = [&](int level, const std::array<std::array<double, 3>, 3>& a) {
        std::vector<double> row{double(level)};
        for (int i = 0; i < c.d; ++i)
            for (int j = 0; j < c.d; ++j)
                row.push_back(a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        row.push_back(hp.theta_hat);
        row.push_back(hp.sigma2);
        csv.row(row);
    };
    emit(c.m, hp.abar);
    emit(c.m - 1, hp.abar_prev);
    ws.write("cell.csv", csv.str());
}

void run_corrector(const ExperimentConfig& c, Workspace& ws) {
    std::vector<double> radii = c.r_grid;
    if (radii.empty()) radii = {9.0, 27.0, 81.0};

    CsvWriter csv({"seed", "k", "r", "osc", "osc_over_r"});
    ws.begin("corrector");
    for (int s = 0; s < c.n_seeds; ++s) {
        Environment env =
            generate_environment(LatticeBox::square(c.d, c.box_side), c.p,
                                 c.lambda, c.law, derive_seed(c.seed, s));
        ClusterLabeling lab = label_clusters(env);
        const Coord y = center_proxy_vertex(env, lab);
        for (int k = 1; k <= c.d; ++k) {
            CorrectorField chi = solve_corrector(env, lab, k, y, c.tol);
            std::vector<double> osc = corrector_oscillation(env, lab, chi, radii);
            for (std::size_t i = 0; i < radii.size(); ++i)
                csv.row({double(s), double(k), radii[i], osc[i], osc[i] / radii[i]});
            if (s == 0) {
                FieldFile f;
                f.d = c.d;
                f.sides = env.box.sides;
                f.method = "uniformization";
                f.values = chi.values;
                f.mask = proxy_mask(env, lab);
                const std::string name = "chi_" + std::to_string(k) + ".fld";
                save_field(f, ws.path(name));
                ws.note_artifact(name);
                ws.note_artifact(name + ".mask");
            }
        }
    }
    ws.end();
    ws.write("corrector.csv", csv.str());
}

void run_flux_norm(const ExperimentConfig& c, Workspace& ws) {
    std::vector<double> radii = c.r_grid;
    if (radii.empty()) radii = {9.0, 27.0, 81.0};
    Calibration cal = calibrate(c, ws);

    CsvWriter csv({"seed", "r", "dual_norm", "dual_over_r", "msp_bound"});
    ws.begin("flux-norm");
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(c.n_seeds));
    parallel_for(c.n_seeds, [&](int s) {
        Environment env =
            generate_environment(LatticeBox::square(c.d, c.box_side), c.p,
                                 c.lambda, c.law, derive_seed(c.seed, s));
        ClusterLabeling lab = label_clusters(env);
        const Coord y = center_proxy_vertex(env, lab);
        CorrectorField chi = solve_corrector(env, lab, 1, y, c.tol);
        FluxField g = flux_field(env, lab, chi, cal.sigma2, FluxVariant::Centered);
        auto& out = rows[static_cast<std::size_t>(s)];
        for (double r : radii) {
            WeakNorm w = weak_norm_vector(env, lab, g.comp, y, r);
            out.push_back(r);
            out.push_back(w.dual_norm);
            out.push_back(w.msp_bound);
        }
    });
    ws.end();
    for (int s = 0; s < c.n_seeds; ++s) {
        const auto& out = rows[static_cast<std::size_t>(s)];
        for (std::size_t i = 0; i < out.size(); i += 3)
            csv.row({double(s), out[i], out[i + 1], out[i + 1] / out[i], out[i + 2]});
    }
    ws.write("flux_norm.csv", csv.str());
}

void run_kernel(const ExperimentConfig& c, Workspace& ws) {
    std::vector<double> ts = c.t_grid;
    if (ts.empty()) ts = {c.t};
    std::sort(ts.begin(), ts.end());

    ws.begin("kernel");
    Environment env = generate_environment(LatticeBox::square(c.d, c.box_side),
                                           c.p, c.lambda, c.law, c.seed);
    ClusterLabeling lab = label_clusters(env);
    const Coord y = center_proxy_vertex(env, lab);
    GraphOperator op(env, proxy_mask(env, lab));

    Field p(static_cast<std::size_t>(env.box.vertex_count()), 0.0);
    p[static_cast<std::size_t>(env.box.index_of(y))] = 1.0;
    double prev_t = 0.0;

    std::vector<double> grid{1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0};
    CsvWriter csv({"t", "mass", "min_p", "max_p", "mass_defect_bound",
                   "cv_C", "barlow_C"});
    const auto& K = simd::active();
    for (double t : ts) {
        double defect = 0.0;
        p = evolve_field(op, p, t - prev_t, c.tol, &defect);
        prev_t = t;
        KernelSnapshot snap;
        snap.t = t;
        snap.y_index = env.box.index_of(y);
        snap.values = p;
        snap.mass_defect_bound = defect;
        BoundReport br = check_kernel_bounds(env, lab, snap, grid);

        const double mass = K.sum(p.data(), p.size());
        double mn = 1e300, mx = -1e300;
        for (std::int64_t i = 0; i < env.box.vertex_count(); ++i) {
            if (!lab.on_proxy(i)) continue;
            mn = std::min(mn, p[static_cast<std::size_t>(i)]);
            mx = std::max(mx, p[static_cast<std::size_t>(i)]);
        }
        csv.row({t, mass, mn, mx, defect, br.carne_varopoulos_C, br.barlow_C});

        FieldFile f;
        f.d = c.d;
        f.sides = env.box.sides;
        f.t = t;
        f.y = y;
        f.method = "uniformization";
        f.values = p;
        f.mask = proxy_mask(env, lab);
        std::ostringstream name;
        name << "kernel_t" << t << ".fld";
        save_field(f, ws.path(name.str()));
        ws.note_artifact(name.str());
        ws.note_artifact(name.str() + ".mask");
    }
    ws.end();
    ws.write("kernel.csv", csv.str());
}

void run_walks(const ExperimentConfig& c, Workspace& ws) {
    ws.begin("walks");
    Environment env = generate_environment(LatticeBox::square(c.d, c.box_side),
                                           c.p, c.lambda, c.law, c.seed);
    ClusterLabeling lab = label_clusters(env);
    const Coord y = center_proxy_vertex(env, lab);

    CsvWriter csv({"walk", "horizon", "n_replicas", "mean_dx1", "mean_dx2", "tv",
                   "tv_bound"});
    const struct {
        WalkType type;
        const char* name;
    } kinds[] = {{WalkType::VSRW, "0"}, {WalkType::CSRW, "1"}, {WalkType::SRW, "2"}};

    for (const auto& kind : kinds) {
        const double horizon =
            kind.type == WalkType::SRW ? std::max(1.0, c.t) : c.t;
        WalkSample wsam = sample_walks(env, lab, y, horizon, kind.type,
                                       c.n_samples, c.seed);
        double m1 = 0, m2 = 0;
        for (std::int64_t e : wsam.endpoints) {
            const Coord x = env.box.coord_of_index(e);
            m1 += double(x[0] - y[0]);
            m2 += double(x[1] - y[1]);
        }
        m1 /= double(c.n_samples);
        m2 /= double(c.n_samples);

        double tv = 0.0, tv_bound = 0.0;
        if (kind.type == WalkType::VSRW) {
            KernelSnapshot snap = evolve_kernel(env, lab, y, c.t,
                                                EvolveMethod::Uniformization, c.tol);
            std::vector<double> hist(snap.values.size(), 0.0);
            for (std::int64_t e : wsam.endpoints)
                hist[static_cast<std::size_t>(e)] += 1.0 / double(c.n_samples);
            for (std::size_t i = 0; i < hist.size(); ++i) {
                tv += 0.5 * std::abs(hist[i] - snap.values[i]);
                const double pv = snap.values[i];
                tv_bound +=
                    0.5 * std::sqrt(std::max(pv * (1 - pv), 0.0) / double(c.n_samples));
            }
        }
        csv.row_mixed({kind.name, format_double(horizon),
                       std::to_string(c.n_samples), format_double(m1),
                       format_double(m2), format_double(tv),
                       format_double(tv_bound)});
    }
    ws.end();
    ws.write("walks.csv", csv.str());
}

struct LcltSeries {
    std::vector<double> ts;
    std::vector<double> median_sup; // normalized sup error per t, median of seeds
    std::vector<std::vector<double>> rows; // seed, t, sup, weighted_l2, peak
};

LcltSeries lclt_series(const ExperimentConfig& c, const Calibration& cal) {
    std::vector<double> ts = c.t_grid;
    if (ts.empty()) ts = {250, 500, 1000, 2000, 4000};
    std::sort(ts.begin(), ts.end());

    std::vector<std::vector<double>> sups(ts.size());
    LcltSeries out;
    out.ts = ts;

    std::vector<std::vector<std::vector<double>>> per_seed(
        static_cast<std::size_t>(c.n_seeds));
    parallel_for(c.n_seeds, [&](int s) {
        Environment env =
            generate_environment(LatticeBox::square(c.d, c.box_side), c.p,
                                 c.lambda, c.law, derive_seed(c.seed, s));
        ClusterLabeling lab = label_clusters(env);
        const Coord y = center_proxy_vertex(env, lab);
        GraphOperator op(env, proxy_mask(env, lab));

        Field p(static_cast<std::size_t>(env.box.vertex_count()), 0.0);
        p[static_cast<std::size_t>(env.box.index_of(y))] = 1.0;
        double prev = 0.0;
        double c_psi = 32.0; // refitted from the first snapshot's Barlow fit
        bool fitted = false;
        for (double t : ts) {
            p = evolve_field(op, p, t - prev, c.tol);
            prev = t;
            KernelSnapshot snap;
            snap.t = t;
            snap.y_index = env.box.index_of(y);
            snap.values = p;
            if (!fitted) {
                BoundReport br = check_kernel_bounds(env, lab, snap,
                                                     {1, 2, 4, 8, 16, 32});
                if (br.barlow_C > 0.0) c_psi = 4.0 * br.barlow_C;
                fitted = true;
            }
            LcltError err =
                lclt_error(env, lab, snap, cal.sigma2, cal.theta, c.c0, c_psi);
            double peak = 0.0;
            for (std::int64_t i = 0; i < env.box.vertex_count(); ++i)
                if (lab.on_proxy(i))
                    peak = std::max(peak,
                                    std::pow(t, 0.5 * c.d) *
                                        p[static_cast<std::size_t>(i)]);
            per_seed[static_cast<std::size_t>(s)].push_back(
                {double(s), t, err.sup_central, err.weighted_l2, c_psi / 4.0,
                 peak});
        }
    });

    for (int s = 0; s < c.n_seeds; ++s)
        for (auto& row : per_seed[static_cast<std::size_t>(s)]) {
            for (std::size_t ti = 0; ti < ts.size(); ++ti)
                if (row[1] == ts[ti]) sups[ti].push_back(row[2]);
            out.rows.push_back(row);
        }
    for (auto& v : sups) out.median_sup.push_back(median_of(v));
    return out;
}

void run_lclt(const ExperimentConfig& c, Workspace& ws) {
    Calibration cal = calibrate(c, ws);
    ws.begin("lclt");
    LcltSeries series = lclt_series(c, cal);
    ws.end();

    CsvWriter csv({"seed", "t", "sup_error", "weighted_l2", "fitted_C", "peak"});
    for (const auto& row : series.rows) csv.row(row);
    ws.write("lclt.csv", csv.str());

    CsvWriter med({"t", "median_sup_error"});
    SvgSeries s;
    s.label = "t^{d/2} sup |p - theta^-1 pbar|";
    for (std::size_t i = 0; i < series.ts.size(); ++i) {
        med.row({series.ts[i], series.median_sup[i]});
        s.x.push_back(series.ts[i]);
        s.y.push_back(std::max(series.median_sup[i], 1e-300));
    }
    ws.write("lclt_median.csv", med.str());
    ws.write("lclt.svg",
             svg_line_chart("normalized local CLT error", {s}, true, true));
}

void run_rate(const ExperimentConfig& c, Workspace& ws) {
    Calibration cal = calibrate(c, ws);
    ws.begin("rate");
    LcltSeries series = lclt_series(c, cal);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < series.ts.size(); ++i)
        pts.emplace_back(series.ts[i], series.median_sup[i]);
    RateFit fit = fit_rate(pts);
    ws.end();

    CsvWriter csv({"t", "median_sup_error"});
    for (const auto& [t, e] : pts) csv.row({t, e});
    ws.write("rate.csv", csv.str());

    std::ostringstream js;
    js << "{\n  \"slope\": " << format_double(fit.slope)
       << ",\n  \"intercept\": " << format_double(fit.intercept)
       << ",\n  \"rms_residual\": " << format_double(fit.residual) << "\n}\n";
    ws.write("summary.json", js.str());
}

void run_green(const ExperimentConfig& c, Workspace& ws) {
    Calibration cal = calibrate(c, ws);
    ws.begin("green");
    Environment env = generate_environment(LatticeBox::square(c.d, c.box_side),
                                           c.p, c.lambda, c.law, c.seed);
    ClusterLabeling lab = label_clusters(env);
    const Coord y = center_proxy_vertex(env, lab);
    const double t_max = c.t_max > 0 ? c.t_max : 10.0 * double(c.box_side);
    GreenReport rep =
        green_function(env, lab, y, t_max, c.tol, cal.sigma2, cal.theta);
    ws.end();

    std::vector<std::string> cols{"x1", "x2"};
    if (c.d == 3) cols.push_back("x3");
    cols.push_back("r");
    cols.push_back("g");
    cols.push_back("g_hom");
    CsvWriter csv(cols);
    for (std::size_t i = 0; i < rep.x_index.size(); ++i) {
        const Coord x = env.box.coord_of_index(rep.x_index[i]);
        std::vector<double> row{double(x[0] - y[0]), double(x[1] - y[1])};
        if (c.d == 3) row.push_back(double(x[2] - y[2]));
        row.push_back(std::sqrt(l2_dist_sq(x, y, c.d)));
        row.push_back(rep.g[i]);
        row.push_back(rep.g_hom[i]);
        csv.row(row);
    }
    ws.write("green.csv", csv.str());

    std::ostringstream js;
    js << "{\n  \"t_max\": " << format_double(rep.t_max)
       << ",\n  \"t0\": " << format_double(rep.t0)
       << ",\n  \"rho\": " << format_double(rep.rho)
       << ",\n  \"K_estimate\": " << format_double(rep.K_estimate)
       << ",\n  \"K_spread\": " << format_double(rep.K_spread) << "\n}\n";
    ws.write("summary.json", js.str());
}

void run_dirichlet(const ExperimentConfig& c, Workspace& ws) {
    Calibration cal = calibrate(c, ws);
    std::vector<double> radii = c.r_grid;
    if (radii.empty()) radii = {27.0, 81.0};

    CsvWriter csv({"seed", "r", "rel_error"});
    ws.begin("dirichlet");
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(c.n_seeds));
    parallel_for(c.n_seeds, [&](int s) {
        for (double r : radii) {
            const std::int64_t side =
                std::max<std::int64_t>(static_cast<std::int64_t>(2 * r + 5), 9);
            Environment env = generate_environment(LatticeBox::square(c.d, side),
                                                   c.p, c.lambda, c.law,
                                                   derive_seed(c.seed, s));
            ClusterLabeling lab = label_clusters(env);
            Coord center{0, 0, 0};
            for (int a = 0; a < c.d; ++a) center[a] = side / 2;
            Field f(static_cast<std::size_t>(env.box.vertex_count()), 0.0);
            for (std::int64_t i = 0; i < env.box.vertex_count(); ++i)
                f[static_cast<std::size_t>(i)] =
                    double(env.box.coord_of_index(i)[0] - center[0]);
            DirichletResult res = dirichlet_homogenization_experiment(
                env, lab, center, r, f, cal.sigma2, c.n_steps, c.tol);
            rows[static_cast<std::size_t>(s)].push_back(r);
            rows[static_cast<std::size_t>(s)].push_back(res.rel_error);
        }
    });
    ws.end();
    for (int s = 0; s < c.n_seeds; ++s)
        for (std::size_t i = 0; i < rows[static_cast<std::size_t>(s)].size(); i += 2)
            csv.row({double(s), rows[static_cast<std::size_t>(s)][i],
                     rows[static_cast<std::size_t>(s)][i + 1]});
    ws.write("dirichlet.csv", csv.str());
}

void run_report_all(const ExperimentConfig& c, Workspace& ws) {
    ExperimentConfig sub = c;
    sub.out_dir = ws.dir + "/theta";
    sub.experiment = "theta";
    run(sub);
    sub.out_dir = ws.dir + "/cell";
    sub.experiment = "cell";
    run(sub);
    sub.out_dir = ws.dir + "/partition";
    sub.experiment = "partition";
    run(sub);
    sub.out_dir = ws.dir + "/kernel";
    sub.experiment = "kernel";
    run(sub);
    ws.write("report.txt", "see theta/, cell/, partition/, kernel/\n");
}

// figure1: density of t^{d/2} p(1000, ., 0) at p=0.7 plus the error against
// the normalized Gaussian; figure2: level sets across dyadic times at p=0.6
// on a 256x256 box with the error-decay series.
void run_figure1(Workspace& ws) {
    ExperimentConfig c;
    c.experiment = "kernel";
    c.d = 2;
    c.p = 0.7;
    c.box_side = 256;
    c.seed = 20;
    c.m = 4;
    c.n_samples = 80;
    Calibration cal = calibrate(c, ws);

    ws.begin("figure1");
    Environment env = generate_environment(LatticeBox::square(2, 256), c.p, 1.0,
                                           Law::BernoulliUnit, c.seed);
    ClusterLabeling lab = label_clusters(env);
    const Coord y = center_proxy_vertex(env, lab);
    KernelSnapshot snap =
        evolve_kernel(env, lab, y, 1000.0, EvolveMethod::Uniformization, 1e-10);

    const int w = 160;
    std::vector<double> density(static_cast<std::size_t>(w) * w, 0.0);
    std::vector<double> error(static_cast<std::size_t>(w) * w, 0.0);
    for (int r = 0; r < w; ++r) {
        for (int cc = 0; cc < w; ++cc) {
            Coord x{y[0] - w / 2 + r, y[1] - w / 2 + cc, 0};
            if (!env.box.contains(x)) continue;
            const std::int64_t i = env.box.index_of(x);
            if (!lab.on_proxy(i)) continue;
            const double t = snap.t;
            const double val = t * snap.values[static_cast<std::size_t>(i)];
            const double hom = t / cal.theta *
                               homogenized_kernel_r2(cal.sigma2, t,
                                                     l2_dist_sq(x, y, 2), 2);
            density[static_cast<std::size_t>(r) * w + cc] = val;
            error[static_cast<std::size_t>(r) * w + cc] = std::abs(val - hom);
        }
    }
    ws.end();
    ws.write("figure1_density.svg",
             svg_heat_map("t p(t,.,y) at t=1000, p=0.7", density, w, w));
    ws.write("figure1_error.svg",
             svg_heat_map("t |p - theta^-1 pbar| at t=1000, p=0.7", error, w, w));

    CsvWriter csv({"r", "t_p", "t_pbar_over_theta"});
    for (int rr = 0; rr < w / 2; ++rr) {
        Coord x{y[0] + rr, y[1], 0};
        const std::int64_t i = env.box.index_of(x);
        const double val =
            lab.on_proxy(i) ? 1000.0 * snap.values[static_cast<std::size_t>(i)] : 0.0;
        csv.row({double(rr), val,
                 1000.0 / cal.theta *
                     homogenized_kernel_r2(cal.sigma2, 1000.0, double(rr) * rr, 2)});
    }
    ws.write("figure1_profile.csv", csv.str());
}

void run_figure2(Workspace& ws) {
    ExperimentConfig c;
    c.experiment = "lclt";
    c.d = 2;
    c.p = 0.6;
    c.box_side = 256;
    c.seed = 21;
    c.m = 4;
    c.n_samples = 80;
    c.force = false;
    Calibration cal = calibrate(c, ws);

    ws.begin("figure2");
    Environment env = generate_environment(LatticeBox::square(2, 256), c.p, 1.0,
                                           Law::BernoulliUnit, c.seed);
    ClusterLabeling lab = label_clusters(env);
    const Coord y = center_proxy_vertex(env, lab);
    GraphOperator op(env, proxy_mask(env, lab));

    Field p(static_cast<std::size_t>(env.box.vertex_count()), 0.0);
    p[static_cast<std::size_t>(env.box.index_of(y))] = 1.0;
    double prev = 0.0;

    CsvWriter csv({"t", "sup_error", "weighted_l2"});
    const std::vector<double> ts{500, 1000, 2000, 3000, 4000};
    for (double t : ts) {
        p = evolve_field(op, p, t - prev, 1e-10);
        prev = t;
        KernelSnapshot snap;
        snap.t = t;
        snap.y_index = env.box.index_of(y);
        snap.values = p;
        LcltError err = lclt_error(env, lab, snap, cal.sigma2, cal.theta, 16.0, 32.0);
        csv.row({t, err.sup_central, err.weighted_l2});

        const int w = 200;
        std::vector<double> level(static_cast<std::size_t>(w) * w, 0.0);
        for (int r = 0; r < w; ++r)
            for (int cc = 0; cc < w; ++cc) {
                Coord x{y[0] - w / 2 + r, y[1] - w / 2 + cc, 0};
                if (!env.box.contains(x)) continue;
                const std::int64_t i = env.box.index_of(x);
                if (!lab.on_proxy(i)) continue;
                level[static_cast<std::size_t>(r) * w + cc] =
                    t * p[static_cast<std::size_t>(i)];
            }
        std::ostringstream name;
        name << "figure2_t" << static_cast<int>(t) << ".svg";
        std::ostringstream title;
        title << "t p(t,.,y), t=" << static_cast<int>(t) << ", p=0.6";
        ws.write(name.str(), svg_heat_map(title.str(), level, w, w));
    }
    ws.end();
    ws.write("figure2_errors.csv", csv.str());
}

void run_smoke(Workspace& ws) {
    ws.begin("smoke");
    // Exhaustive 3x3 theta oracle over all 2^12 bond configurations versus
    // the Monte Carlo estimator.
    const LatticeBox box = LatticeBox::square(2, 3);
    const double p = 0.6;
    std::vector<std::pair<int, int>> bonds; // (direction, base index)
    for (int k = 1; k <= 2; ++k)
        for (std::int64_t i = 0; i < box.vertex_count(); ++i) {
            Coord c = box.local_of_index(i);
            if (c[k - 1] < box.sides[k - 1] - 1)
                bonds.emplace_back(k, static_cast<int>(i));
        }
    double exact = 0.0;
    Environment env;
    env.box = box;
    env.p = p;
    env.lambda = 1.0;
    env.law = Law::BernoulliUnit;
    env.cond.assign(2, std::vector<double>(static_cast<std::size_t>(box.vertex_count()), 0.0));
    for (std::uint32_t cfg = 0; cfg < (1u << bonds.size()); ++cfg) {
        double prob = 1.0;
        for (std::size_t b = 0; b < bonds.size(); ++b) {
            const bool open = (cfg >> b) & 1u;
            prob *= open ? p : (1.0 - p);
            env.cond[static_cast<std::size_t>(bonds[b].first - 1)]
                    [static_cast<std::size_t>(bonds[b].second)] = open ? 1.0 : 0.0;
        }
        ClusterLabeling lab = label_clusters(env);
        exact += prob * proxy_density_central(env, lab);
    }
    ThetaEstimate mc = estimate_theta(2, p, 3, 10000, 7, Law::BernoulliUnit, 1.0,
                                      /*force=*/true);

    // Two-vertex kernel: single open bond of conductance a in a 2x2 box.
    const double a = 0.7, t = 0.9;
    Environment two;
    two.box = LatticeBox::square(2, 2);
    two.p = 1.0;
    two.lambda = 1.0;
    two.law = Law::BernoulliUnit;
    two.cond.assign(2, std::vector<double>(4, 0.0));
    two.cond[0][0] = a; // bond (0,0)-(1,0) in direction 1
    ClusterLabeling lab2 = label_clusters(two);
    KernelSnapshot snap = evolve_kernel(two, lab2, {0, 0, 0}, t,
                                        EvolveMethod::Uniformization, 1e-12);
    const double numeric = snap.values[static_cast<std::size_t>(two.box.index_of({0, 0, 0}))];
    const double closed_form = 0.5 * (1.0 + std::exp(-2.0 * a * t));
    ws.end();

    CsvWriter csv({"check", "value", "reference", "abs_error"});
    csv.row_mixed({"theta_exhaustive_vs_mc", format_double(mc.theta),
                   format_double(exact), format_double(std::abs(mc.theta - exact))});
    csv.row_mixed({"two_vertex_kernel", format_double(numeric),
                   format_double(closed_form),
                   format_double(std::abs(numeric - closed_form))});
    ws.write("smoke.csv", csv.str());
}

} // namespace

RunManifest run(const ExperimentConfig& config) {
    Workspace ws(config.out_dir);
    if (config.experiment == "theta") run_theta(config, ws);
    else if (config.experiment == "density-scaling") run_density_scaling(config, ws);
    else if (config.experiment == "partition") run_partition(config, ws);
    else if (config.experiment == "cell") run_cell(config, ws);
    else if (config.experiment == "corrector") run_corrector(config, ws);
    else if (config.experiment == "flux-norm") run_flux_norm(config, ws);
    else if (config.experiment == "kernel") run_kernel(config, ws);
    else if (config.experiment == "walks") run_walks(config, ws);
    else if (config.experiment == "lclt") run_lclt(config, ws);
    else if (config.experiment == "rate") run_rate(config, ws);
    else if (config.experiment == "green") run_green(config, ws);
    else if (config.experiment == "dirichlet") run_dirichlet(config, ws);
    else if (config.experiment == "report-all") run_report_all(config, ws);
    else throw ConfigError("unknown experiment: " + config.experiment);
    ws.finish(dump_config(config));
    return ws.manifest;
}

RunManifest run_preset(const std::string& name, const std::string& out_dir) {
    Workspace ws(out_dir);
    ExperimentConfig echo;
    echo.experiment = "report-all";
    echo.out_dir = out_dir;
    if (name == "figure1") run_figure1(ws);
    else if (name == "figure2") run_figure2(ws);
    else if (name == "smoke") run_smoke(ws);
    else throw ConfigError("unknown preset: " + name);
    ws.finish("preset = " + name + "\n");
    return ws.manifest;
}

} // namespace perchom
