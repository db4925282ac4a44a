#include "perchom/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace perchom {

namespace {

struct Rect {
    Coord lo{0, 0, 0}, hi{0, 0, 0}; // inclusive
    int d = 2;

    bool inside(const LatticeBox& box) const {
        for (int a = 0; a < d; ++a)
            if (lo[a] < box.origin[a] || hi[a] > box.origin[a] + box.sides[a] - 1)
                return false;
        return true;
    }
    std::int64_t extent(int a) const { return hi[a] - lo[a] + 1; }
};

Rect cube_rect(const TriadicCube& c) {
    return {c.lo(), c.hi(), c.d};
}

struct RectClusters {
    // Per restriction-cluster stats over the open bonds inside the rect.
    std::vector<std::int64_t> rep;         // min box index
    std::vector<std::int64_t> size;        // vertex count
    std::vector<std::int64_t> diam;        // ell-infinity diameter
    std::vector<bool> crossing;            // touches all 2d faces
    std::vector<std::vector<std::int64_t>> members; // filled on demand only
};

// Label the open-bond components of env restricted to rect (which must lie
// inside the box). Clusters are components with at least one edge.
RectClusters rect_clusters(const Environment& env, const Rect& r,
                           bool keep_members) {
    const LatticeBox& box = env.box;
    const int d = box.d;
    std::int64_t ext[3] = {1, 1, 1};
    std::int64_t vol = 1;
    for (int a = 0; a < d; ++a) {
        ext[a] = r.extent(a);
        vol *= ext[a];
    }

    auto lidx = [&](const Coord& c) {
        std::int64_t idx = 0;
        for (int a = 0; a < d; ++a) idx = idx * ext[a] + (c[a] - r.lo[a]);
        return idx;
    };

    std::vector<std::int64_t> parent(static_cast<std::size_t>(vol));
    std::iota(parent.begin(), parent.end(), std::int64_t{0});
    std::vector<std::uint8_t> touched(static_cast<std::size_t>(vol), 0);

    auto find = [&](std::int64_t x) {
        std::int64_t root = x;
        while (parent[static_cast<std::size_t>(root)] != root)
            root = parent[static_cast<std::size_t>(root)];
        while (parent[static_cast<std::size_t>(x)] != root) {
            std::int64_t nx = parent[static_cast<std::size_t>(x)];
            parent[static_cast<std::size_t>(x)] = root;
            x = nx;
        }
        return root;
    };
    auto unite = [&](std::int64_t a, std::int64_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[static_cast<std::size_t>(b)] = a;
        else parent[static_cast<std::size_t>(a)] = b;
    };

    Coord c{0, 0, 0};
    for (std::int64_t li = 0; li < vol; ++li) {
        std::int64_t rem = li;
        for (int a = d - 1; a >= 0; --a) {
            c[a] = r.lo[a] + rem % ext[a];
            rem /= ext[a];
        }
        const std::int64_t gi = box.index_of(c);
        for (int k = 1; k <= d; ++k) {
            if (c[k - 1] >= r.hi[k - 1]) continue;
            const double w =
                env.cond[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(gi)];
            if (w == 0.0) continue;
            Coord nb = c;
            nb[k - 1] += 1;
            const std::int64_t lj = lidx(nb);
            unite(li, lj);
            touched[static_cast<std::size_t>(li)] = 1;
            touched[static_cast<std::size_t>(lj)] = 1;
        }
    }

    RectClusters out;
    std::unordered_map<std::int64_t, std::int32_t> ids;
    std::vector<Coord> mins, maxs;
    std::vector<std::uint32_t> face_mask;

    for (std::int64_t li = 0; li < vol; ++li) {
        if (!touched[static_cast<std::size_t>(li)]) continue;
        const std::int64_t root = find(li);
        auto it = ids.find(root);
        std::int32_t id;
        if (it == ids.end()) {
            id = static_cast<std::int32_t>(out.rep.size());
            ids.emplace(root, id);
            out.rep.push_back(0);
            out.size.push_back(0);
            out.diam.push_back(0);
            out.crossing.push_back(false);
            mins.push_back({r.hi[0], r.hi[1], r.hi[2]});
            maxs.push_back({r.lo[0], r.lo[1], r.lo[2]});
            face_mask.push_back(0);
            if (keep_members) out.members.emplace_back();
        } else {
            id = it->second;
        }
        std::int64_t rem = li;
        for (int a = d - 1; a >= 0; --a) {
            c[a] = r.lo[a] + rem % ext[a];
            rem /= ext[a];
        }
        const std::int64_t gi = box.index_of(c);
        auto& mn = mins[static_cast<std::size_t>(id)];
        auto& mx = maxs[static_cast<std::size_t>(id)];
        std::uint32_t fm = face_mask[static_cast<std::size_t>(id)];
        for (int a = 0; a < d; ++a) {
            mn[a] = std::min(mn[a], c[a]);
            mx[a] = std::max(mx[a], c[a]);
            if (c[a] == r.lo[a]) fm |= 1u << (2 * a);
            if (c[a] == r.hi[a]) fm |= 1u << (2 * a + 1);
        }
        face_mask[static_cast<std::size_t>(id)] = fm;
        if (out.size[static_cast<std::size_t>(id)] == 0 ||
            gi < out.rep[static_cast<std::size_t>(id)])
            out.rep[static_cast<std::size_t>(id)] = gi;
        out.size[static_cast<std::size_t>(id)] += 1;
        if (keep_members) out.members[static_cast<std::size_t>(id)].push_back(gi);
    }

    const std::uint32_t all_faces = (1u << (2 * d)) - 1;
    for (std::size_t id = 0; id < out.rep.size(); ++id) {
        std::int64_t dm = 0;
        for (int a = 0; a < d; ++a)
            dm = std::max(dm, maxs[id][a] - mins[id][a]);
        out.diam[id] = dm;
        out.crossing[id] = face_mask[id] == all_faces;
    }
    return out;
}

struct PregoodResult {
    bool pregood = false;
    std::int64_t crossing_rep = -1;
};

// Def 2.1 on a rect of nominal side N (diameter threshold N/10).
PregoodResult pregood_rect(const Environment& env, const Rect& r, double nominal_side) {
    RectClusters cl = rect_clusters(env, r, false);
    std::int64_t crossing = -1;
    int crossing_count = 0;
    for (std::size_t id = 0; id < cl.rep.size(); ++id) {
        if (cl.crossing[id]) {
            ++crossing_count;
            if (crossing < 0 || cl.rep[id] < cl.rep[static_cast<std::size_t>(crossing)])
                crossing = static_cast<std::int64_t>(id);
        }
    }
    if (crossing_count != 1) return {false, -1};
    const double threshold = nominal_side / 10.0;
    for (std::size_t id = 0; id < cl.rep.size(); ++id) {
        if (static_cast<std::int64_t>(id) == crossing) continue;
        if (double(cl.diam[id]) >= threshold) return {false, -1};
    }
    return {true, cl.rep[static_cast<std::size_t>(crossing)]};
}

// Memo key over (side, anchor) for pregood lookups and cube identity maps.
std::uint64_t memo_key(std::int64_t L, const Coord& a) {
    std::uint64_t h = static_cast<std::uint64_t>(L) * 0x9e3779b97f4a7c15ULL;
    for (int i = 0; i < 3; ++i) {
        h ^= static_cast<std::uint64_t>(a[i] + 2097152) + 0x9e3779b97f4a7c15ULL +
             (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdULL;
    }
    return h;
}

struct GoodnessEvaluator {
    const Environment* env;
    int stride_override = 0;
    std::unordered_map<std::uint64_t, std::int8_t> memo;

    bool member_pregood(std::int64_t L, const Coord& anchor) {
        const std::uint64_t k = memo_key(L, anchor);
        auto it = memo.find(k);
        if (it != memo.end()) return it->second != 0;
        Rect r;
        r.d = env->box.d;
        r.lo = anchor;
        r.hi = anchor;
        for (int a = 0; a < r.d; ++a) r.hi[a] += L - 1;
        const bool pg = pregood_rect(*env, r, double(L)).pregood;
        memo.emplace(k, pg ? 1 : 0);
        return pg;
    }

    // Family geometry for a cube of side N: sides L in [max(3, ceil(N/10)), N],
    // anchors on an absolute stride grid, sub-cube intersecting the cube.
    bool family_inside_box(const TriadicCube& cube) const {
        const LatticeBox& box = env->box;
        const std::int64_t N = cube.side();
        const Coord lo = cube.lo(), hi = cube.hi();
        for (int a = 0; a < cube.d; ++a) {
            if (lo[a] - (N - 1) < box.origin[a]) return false;
            if (hi[a] + (N - 1) > box.origin[a] + box.sides[a] - 1) return false;
        }
        return true;
    }

    bool good(const TriadicCube& cube, std::int64_t* crossing_rep = nullptr) {
        const std::int64_t N = cube.side();
        const Rect self = cube_rect(cube);
        PregoodResult pg = pregood_rect(*env, self, double(N));
        if (crossing_rep) *crossing_rep = pg.crossing_rep;
        if (!pg.pregood) return false;

        const std::int64_t Lmin = std::max<std::int64_t>(3, (N + 9) / 10);
        const std::int64_t st =
            stride_override > 0 ? stride_override
                                : std::max<std::int64_t>(1, N / 30);
        const Coord lo = cube.lo(), hi = cube.hi();
        const int d = cube.d;

        for (std::int64_t L = Lmin; L <= N; ++L) {
            // Anchor range per axis, snapped to the absolute stride grid.
            std::int64_t a_lo[3], a_hi[3];
            for (int a = 0; a < d; ++a) {
                a_lo[a] = lo[a] - (L - 1);
                a_hi[a] = hi[a];
                if (st > 1) {
                    std::int64_t s = a_lo[a] >= 0 ? ((a_lo[a] + st - 1) / st) * st
                                                  : -((-a_lo[a]) / st) * st;
                    a_lo[a] = s;
                }
            }
            Coord anchor{0, 0, 0};
            for (std::int64_t x0 = a_lo[0]; x0 <= a_hi[0]; x0 += st) {
                anchor[0] = x0;
                for (std::int64_t x1 = a_lo[1]; x1 <= a_hi[1]; x1 += st) {
                    anchor[1] = x1;
                    if (d == 2) {
                        if (!member_pregood(L, anchor)) return false;
                    } else {
                        for (std::int64_t x2 = a_lo[2]; x2 <= a_hi[2]; x2 += st) {
                            anchor[2] = x2;
                            if (!member_pregood(L, anchor)) return false;
                        }
                    }
                }
            }
        }
        return true;
    }
};

} // namespace

CubeClassification classify_cube(const Environment& env, const TriadicCube& cube,
                                 int stride_override) {
    const Rect r = cube_rect(cube);
    if (!r.inside(env.box)) throw GeometryError("cube exceeds the environment box");

    GoodnessEvaluator ev{&env, stride_override, {}};

    CubeClassification out;
    out.cube = cube;
    const PregoodResult pg = pregood_rect(env, r, double(cube.side()));
    out.pregood = pg.pregood;
    out.crossing_rep = pg.crossing_rep;
    if (cube.level >= 1) {
        if (!ev.family_inside_box(cube))
            throw GeometryError("checking family exceeds the environment box");
        out.good = ev.good(cube);
    }
    return out;
}

TriadicPartition build_partition(const Environment& env, const ClusterLabeling& lab,
                                 int m_cap, int stride_override) {
    const LatticeBox& box = env.box;
    const int d = box.d;
    const std::int64_t n = box.vertex_count();

    TriadicPartition part;
    part.box = box;
    part.m_cap = m_cap;
    part.level.assign(static_cast<std::size_t>(n), 0);

    GoodnessEvaluator ev{&env, stride_override, {}};

    // Required level per vertex: topmost fully evaluable bad cube containing
    // it, and >= 1 off the proxy cluster. Clipped cubes (family leaving the
    // box) are exempt, which forces small cubes near the boundary.
    for (int m = 1; m <= m_cap; ++m) {
        // Enumerate level-m triadic cubes intersecting the box.
        const std::int64_t s = pow3(m);
        Coord zlo{0, 0, 0}, zhi{0, 0, 0};
        for (int a = 0; a < d; ++a) {
            const std::int64_t lo = box.origin[a], hi = box.origin[a] + box.sides[a] - 1;
            zlo[a] = (std::int64_t)std::floor(double(lo - (s - 1) / 2) / double(s));
            zhi[a] = (std::int64_t)std::floor(double(hi + (s - 1) / 2) / double(s));
        }
        Coord z{0, 0, 0};
        for (std::int64_t z0 = zlo[0]; z0 <= zhi[0]; ++z0) {
            z[0] = z0 * s;
            for (std::int64_t z1 = zlo[1]; z1 <= zhi[1]; ++z1) {
                z[1] = z1 * s;
                for (std::int64_t z2 = (d == 3 ? zlo[2] : 0);
                     z2 <= (d == 3 ? zhi[2] : 0); ++z2) {
                    z[2] = d == 3 ? z2 * s : 0;
                    TriadicCube cube;
                    cube.level = m;
                    cube.d = d;
                    cube.center = z;
                    const Rect r = cube_rect(cube);
                    if (!r.inside(box)) continue;            // clipped cube
                    if (!ev.family_inside_box(cube)) continue; // clipped family
                    std::int64_t rep = -1;
                    const bool is_good = ev.good(cube, &rep);
                    CubeClassification cc;
                    cc.cube = cube;
                    cc.good = is_good;
                    cc.pregood = rep >= 0;
                    cc.crossing_rep = rep;
                    part.classified.push_back(cc);
                    if (is_good) continue;
                    // Bad: every vertex inside requires level >= m.
                    const Coord lo = cube.lo();
                    Coord c{0, 0, 0};
                    for (std::int64_t o0 = 0; o0 < s; ++o0)
                        for (std::int64_t o1 = 0; o1 < s; ++o1)
                            for (std::int64_t o2 = 0; o2 < (d == 3 ? s : 1); ++o2) {
                                c[0] = lo[0] + o0;
                                c[1] = lo[1] + o1;
                                c[2] = d == 3 ? lo[2] + o2 : 0;
                                const std::int64_t vi = box.index_of(c);
                                auto& lv = part.level[static_cast<std::size_t>(vi)];
                                lv = std::max<std::uint8_t>(lv, static_cast<std::uint8_t>(m));
                            }
                }
            }
        }
    }
    for (std::int64_t i = 0; i < n; ++i)
        if (!lab.on_proxy(i) && part.level[static_cast<std::size_t>(i)] == 0)
            part.level[static_cast<std::size_t>(i)] = 1;

    const int top_level = [&] {
        int m = 0;
        while (pow3(m) < *std::max_element(box.sides.begin(),
                                           box.sides.begin() + d))
            ++m;
        return m;
    }();

    // Triadic consistency: if any vertex of a level-m cube sits at level >= m,
    // the whole in-box part of the cube is raised to at least m.
    auto consistency_sweep = [&] {
        for (int m = 1; m <= top_level; ++m) {
            const std::int64_t s = pow3(m);
            std::unordered_map<std::uint64_t, std::uint8_t> cube_max;
            auto ckey = [&](const Coord& c) {
                const TriadicCube q = triadic_cube_of(c, m, d);
                return memo_key(q.level, q.center);
            };
            for (std::int64_t i = 0; i < n; ++i) {
                const Coord c = box.coord_of_index(i);
                auto& slot = cube_max[ckey(c)];
                slot = std::max(slot, part.level[static_cast<std::size_t>(i)]);
            }
            for (std::int64_t i = 0; i < n; ++i) {
                const Coord c = box.coord_of_index(i);
                if (cube_max[ckey(c)] >= m) {
                    auto& lv = part.level[static_cast<std::size_t>(i)];
                    lv = std::max<std::uint8_t>(lv, static_cast<std::uint8_t>(m));
                }
            }
            (void)s;
        }
    };
    consistency_sweep();

    // 3:1 balancing: adjacent elements differ by at most one level.
    bool changed = true;
    int guard = 0;
    while (changed && guard++ <= 4 * top_level) {
        changed = false;
        for (std::int64_t i = 0; i < n; ++i) {
            const Coord c = box.coord_of_index(i);
            const std::uint8_t li = part.level[static_cast<std::size_t>(i)];
            Coord nb{0, 0, 0};
            for (int o0 = -1; o0 <= 1; ++o0)
                for (int o1 = -1; o1 <= 1; ++o1)
                    for (int o2 = (d == 3 ? -1 : 0); o2 <= (d == 3 ? 1 : 0); ++o2) {
                        nb[0] = c[0] + o0;
                        nb[1] = c[1] + o1;
                        nb[2] = d == 3 ? c[2] + o2 : 0;
                        if (!box.contains(nb)) continue;
                        const std::uint8_t lj =
                            part.level[static_cast<std::size_t>(box.index_of(nb))];
                        if (lj > li + 1) {
                            part.level[static_cast<std::size_t>(i)] =
                                static_cast<std::uint8_t>(lj - 1);
                            changed = true;
                        }
                    }
        }
        if (changed) consistency_sweep();
    }

    // Collect elements.
    part.elem_id.assign(static_cast<std::size_t>(n), -1);
    std::unordered_map<std::uint64_t, std::int32_t> elem_ids;
    for (std::int64_t i = 0; i < n; ++i) {
        const Coord c = box.coord_of_index(i);
        const int m = part.level[static_cast<std::size_t>(i)];
        const TriadicCube q = triadic_cube_of(c, m, d);
        const std::uint64_t k = memo_key(1000 + q.level, q.center);
        auto it = elem_ids.find(k);
        std::int32_t id;
        if (it == elem_ids.end()) {
            id = static_cast<std::int32_t>(part.elements.size());
            elem_ids.emplace(k, id);
            PartitionElement e;
            e.cube = q;
            part.elements.push_back(e);
        } else {
            id = it->second;
        }
        part.elem_id[static_cast<std::size_t>(i)] = id;
        part.elements[static_cast<std::size_t>(id)].inbox_count += 1;
    }
    return part;
}

Field coarsen(const Field& u, const Environment& env, const TriadicPartition& part,
              const ClusterLabeling& lab) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    if (static_cast<std::int64_t>(u.size()) != n)
        throw ShapeError("field size does not match box");

    Field out(static_cast<std::size_t>(n), 0.0);

    // Donor vertex per element, resolved lazily.
    std::vector<std::int64_t> donor(part.elements.size(), -2);

    auto resolve_donor = [&](std::int32_t eid) -> std::int64_t {
        TriadicCube cube = part.elements[static_cast<std::size_t>(eid)].cube;
        const int d = box.d;
        while (true) {
            Rect r = cube_rect(cube);
            // Clip to the box.
            for (int a = 0; a < d; ++a) {
                r.lo[a] = std::max(r.lo[a], box.origin[a]);
                r.hi[a] = std::min(r.hi[a], box.origin[a] + box.sides[a] - 1);
            }
            bool nonempty = true;
            for (int a = 0; a < d; ++a)
                if (r.lo[a] > r.hi[a]) nonempty = false;

            std::int64_t best = -1;
            double best_d = 1e300;
            Coord best_c{0, 0, 0};
            if (nonempty) {
                RectClusters cl = rect_clusters(env, r, true);
                // Prefer the crossing cluster (min rep when several), restricted
                // to the proxy; fall back to any in-rect proxy vertex.
                std::int64_t cid = -1;
                for (std::size_t id = 0; id < cl.rep.size(); ++id)
                    if (cl.crossing[id] &&
                        (cid < 0 || cl.rep[id] < cl.rep[static_cast<std::size_t>(cid)]))
                        cid = static_cast<std::int64_t>(id);
                auto consider = [&](std::int64_t gi) {
                    if (!lab.on_proxy(gi)) return;
                    const Coord c = box.coord_of_index(gi);
                    const double dist = l2_dist_sq(c, cube.center, d);
                    if (dist < best_d ||
                        (dist == best_d && lex_less(c, best_c, d))) {
                        best_d = dist;
                        best_c = c;
                        best = gi;
                    }
                };
                if (cid >= 0)
                    for (std::int64_t gi : cl.members[static_cast<std::size_t>(cid)])
                        consider(gi);
                if (best < 0) {
                    // No proxy point on the crossing cluster; nearest in-rect
                    // proxy vertex to the center instead.
                    Coord c{0, 0, 0};
                    for (std::int64_t x0 = r.lo[0]; x0 <= r.hi[0]; ++x0)
                        for (std::int64_t x1 = r.lo[1]; x1 <= r.hi[1]; ++x1)
                            for (std::int64_t x2 = (d == 3 ? r.lo[2] : 0);
                                 x2 <= (d == 3 ? r.hi[2] : 0); ++x2) {
                                c[0] = x0;
                                c[1] = x1;
                                c[2] = d == 3 ? x2 : 0;
                                consider(box.index_of(c));
                            }
                }
            }
            if (best >= 0) return best;
            if (cube.side() >= *std::max_element(box.sides.begin(),
                                                 box.sides.begin() + d) * 3)
                throw CoarseningError(
                    "partition cube (and its ancestors) carry no crossing "
                    "cluster on the proxy");
            cube = triadic_cube_of(cube.center, cube.level + 1, d);
        }
    };

    for (std::int64_t i = 0; i < n; ++i) {
        if (lab.on_proxy(i)) {
            out[static_cast<std::size_t>(i)] = u[static_cast<std::size_t>(i)];
            continue;
        }
        const std::int32_t eid = part.elem_id[static_cast<std::size_t>(i)];
        if (donor[static_cast<std::size_t>(eid)] == -2)
            donor[static_cast<std::size_t>(eid)] = resolve_donor(eid);
        out[static_cast<std::size_t>(i)] =
            u[static_cast<std::size_t>(donor[static_cast<std::size_t>(eid)])];
    }
    return out;
}

PartitionStats partition_stats(const TriadicPartition& part, double q) {
    if (q < 1.0) throw ParamError("q must be >= 1");
    const LatticeBox& box = part.box;
    const int d = box.d;
    const std::int64_t n = box.vertex_count();

    Coord center{0, 0, 0};
    std::int64_t min_side = box.sides[0];
    for (int a = 0; a < d; ++a) {
        center[a] = box.origin[a] + box.sides[a] / 2;
        min_side = std::min(min_side, box.sides[a]);
    }

    PartitionStats st;
    st.q = q;
    for (double r = 2.0; r <= double(min_side) / 2.0; r *= 2.0)
        st.radii.push_back(r);
    if (st.radii.empty() || st.radii.back() < double(min_side) / 2.0)
        st.radii.push_back(double(min_side) / 2.0);

    std::vector<std::int64_t> size_count(part.m_cap + 8, 0);
    for (std::int64_t i = 0; i < n; ++i)
        size_count[part.level[static_cast<std::size_t>(i)]] += 1;

    for (double r : st.radii) {
        double acc = 0.0;
        std::int64_t mx = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const Coord c = box.coord_of_index(i);
            if (l2_dist_sq(c, center, d) > r * r) continue;
            const std::int64_t sz = part.size_at(i);
            acc += std::pow(double(sz), q);
            mx = std::max(mx, sz);
        }
        st.moment_sum.push_back(acc / std::pow(r, double(d)));
        st.max_size.push_back(mx);
    }

    // Empirical tail over the whole box.
    std::int64_t total = 0;
    for (std::int64_t c : size_count) total += c;
    for (std::size_t lv = 0; lv < size_count.size(); ++lv) {
        if (size_count[lv] == 0) continue;
        std::int64_t at_least = 0;
        for (std::size_t l2 = lv; l2 < size_count.size(); ++l2)
            at_least += size_count[l2];
        st.tail_sizes.push_back(pow3(static_cast<int>(lv)));
        st.tail_prob.push_back(double(at_least) / double(total));
    }
    return st;
}

namespace {

// Are the crossing clusters of two good cubes connected inside the union?
bool pair_connected(const Environment& env, const CubeClassification& a,
                    const CubeClassification& b) {
    const LatticeBox& box = env.box;
    const int d = box.d;
    Rect ra = cube_rect(a.cube), rb = cube_rect(b.cube);
    Rect bound;
    bound.d = d;
    for (int ax = 0; ax < d; ++ax) {
        bound.lo[ax] = std::min(ra.lo[ax], rb.lo[ax]);
        bound.hi[ax] = std::max(ra.hi[ax], rb.hi[ax]);
    }

    auto in_union = [&](const Coord& c) {
        auto inside = [&](const Rect& r) {
            for (int ax = 0; ax < d; ++ax)
                if (c[ax] < r.lo[ax] || c[ax] > r.hi[ax]) return false;
            return true;
        };
        return inside(ra) || inside(rb);
    };

    // BFS from a's crossing representative over open bonds inside the union.
    std::vector<std::int64_t> stack{a.crossing_rep};
    std::unordered_map<std::int64_t, bool> seen;
    seen[a.crossing_rep] = true;
    while (!stack.empty()) {
        const std::int64_t x = stack.back();
        stack.pop_back();
        if (x == b.crossing_rep) return true;
        const Coord c = box.coord_of_index(x);
        const Coord lc = box.local_of_index(x);
        for (int k = 1; k <= d; ++k) {
            const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
            const std::int64_t s = box.stride(k - 1);
            if (lc[k - 1] < box.sides[k - 1] - 1 &&
                w[static_cast<std::size_t>(x)] != 0.0) {
                Coord nb = c;
                nb[k - 1] += 1;
                if (in_union(nb) && !seen[x + s]) {
                    seen[x + s] = true;
                    stack.push_back(x + s);
                }
            }
            if (lc[k - 1] > 0 && w[static_cast<std::size_t>(x - s)] != 0.0) {
                Coord nb = c;
                nb[k - 1] -= 1;
                if (in_union(nb) && !seen[x - s]) {
                    seen[x - s] = true;
                    stack.push_back(x - s);
                }
            }
        }
    }
    return false;
}

// Squared Euclidean distance between the vertex sets of two rects; the
// lemma's adjacency dist <= 1 excludes corner-touching cubes (distance
// sqrt(2) or more).
std::int64_t rect_dist_sq(const Rect& a, const Rect& b, int d) {
    std::int64_t g = 0;
    for (int ax = 0; ax < d; ++ax) {
        std::int64_t lo = std::max(a.lo[ax], b.lo[ax]);
        std::int64_t hi = std::min(a.hi[ax], b.hi[ax]);
        if (lo > hi) g += (lo - hi) * (lo - hi);
    }
    return g;
}

} // namespace

ConnectivityReport check_connectivity(const Environment& env,
                                      const TriadicPartition& part) {
    ConnectivityReport rep;
    const int d = env.box.d;

    // All good cubes recorded during the build.
    std::vector<const CubeClassification*> good;
    for (const auto& cc : part.classified)
        if (cc.good) good.push_back(&cc);

    for (std::size_t i = 0; i < good.size(); ++i) {
        for (std::size_t j = i + 1; j < good.size(); ++j) {
            const auto& a = *good[i];
            const auto& b = *good[j];
            if (std::abs(a.cube.level - b.cube.level) > 1) continue;
            if (rect_dist_sq(cube_rect(a.cube), cube_rect(b.cube), d) > 1)
                continue;
            ++rep.cube_pairs_checked;
            if (!pair_connected(env, a, b)) ++rep.cube_pair_violations;
        }
    }

    // Pairs of adjacent partition elements that are both good.
    std::unordered_map<std::uint64_t, const CubeClassification*> by_cube;
    for (const auto& cc : part.classified)
        by_cube[memo_key(1000 + cc.cube.level, cc.cube.center)] = &cc;

    std::vector<const CubeClassification*> good_elems;
    for (const auto& e : part.elements) {
        auto it = by_cube.find(memo_key(1000 + e.cube.level, e.cube.center));
        if (it != by_cube.end() && it->second->good) good_elems.push_back(it->second);
    }
    for (std::size_t i = 0; i < good_elems.size(); ++i) {
        for (std::size_t j = i + 1; j < good_elems.size(); ++j) {
            const auto& a = *good_elems[i];
            const auto& b = *good_elems[j];
            if (std::abs(a.cube.level - b.cube.level) > 1) continue;
            if (rect_dist_sq(cube_rect(a.cube), cube_rect(b.cube), d) > 1) continue;
            ++rep.element_pairs_checked;
            if (!pair_connected(env, a, b)) ++rep.element_pair_violations;
        }
    }
    return rep;
}

PartitionInvariantReport verify_partition_invariants(const Environment& env,
                                                     const TriadicPartition& part) {
    (void)env; // goodness is read from the build's classification record
    const LatticeBox& box = part.box;
    const int d = box.d;
    const std::int64_t n = box.vertex_count();

    PartitionInvariantReport rep;

    // Tiling: element in-box counts sum to the box volume, and each vertex's
    // element cube contains it.
    std::int64_t covered = 0;
    for (const auto& e : part.elements) covered += e.inbox_count;
    bool contains_ok = true;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& e =
            part.elements[static_cast<std::size_t>(
                part.elem_id[static_cast<std::size_t>(i)])];
        if (!e.cube.contains(box.coord_of_index(i))) contains_ok = false;
    }
    rep.tiling = covered == n && contains_ok;

    // Neighbor ratio via vertex adjacency.
    bool ratio_ok = true;
    for (std::int64_t i = 0; i < n && ratio_ok; ++i) {
        const Coord c = box.coord_of_index(i);
        Coord nb{0, 0, 0};
        for (int o0 = -1; o0 <= 1 && ratio_ok; ++o0)
            for (int o1 = -1; o1 <= 1 && ratio_ok; ++o1)
                for (int o2 = (d == 3 ? -1 : 0); o2 <= (d == 3 ? 1 : 0) && ratio_ok;
                     ++o2) {
                    nb[0] = c[0] + o0;
                    nb[1] = c[1] + o1;
                    nb[2] = d == 3 ? c[2] + o2 : 0;
                    if (!box.contains(nb)) continue;
                    const int li = part.level[static_cast<std::size_t>(i)];
                    const int lj =
                        part.level[static_cast<std::size_t>(box.index_of(nb))];
                    if (std::abs(li - lj) > 1) ratio_ok = false;
                }
    }
    rep.neighbor_ratio = ratio_ok;

    // Predecessor goodness: every strict ancestor of an element that was
    // fully evaluable must be good.
    std::unordered_map<std::uint64_t, bool> good_map;
    for (const auto& cc : part.classified)
        good_map[memo_key(1000 + cc.cube.level, cc.cube.center)] = cc.good;

    bool pred_ok = true;
    const int top = 9;
    for (const auto& e : part.elements) {
        for (int m = e.cube.level + 1; m <= top && pred_ok; ++m) {
            if (pow3(m) > 3 * box.sides[0]) break;
            const TriadicCube anc = triadic_cube_of(e.cube.center, m, d);
            auto it = good_map.find(memo_key(1000 + anc.level, anc.center));
            if (it != good_map.end() && !it->second) pred_ok = false;
        }
        if (!pred_ok) break;
    }
    rep.predecessor_goodness = pred_ok;
    return rep;
}

} // namespace perchom
