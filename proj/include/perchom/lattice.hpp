#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "perchom/errors.hpp"

namespace perchom {

using Coord = std::array<std::int64_t, 3>; // unused axes fixed at 0

// Axis-aligned box of lattice vertices. Vertices are enumerated row-major:
// axis 0 slowest, axis d-1 fastest, which coincides with lexicographic order
// on (c0,...,c_{d-1}). Bonds are enumerated by direction k=1..d, then by the
// row-major index of the base vertex (the endpoint closer to the origin).
struct LatticeBox {
    int d = 2;
    Coord origin{0, 0, 0};
    Coord sides{0, 0, 0}; // vertices per axis

    LatticeBox() = default;
    LatticeBox(int dim, Coord orig, Coord s) : d(dim), origin(orig), sides(s) {
        if (d != 2 && d != 3) throw ParamError("dimension must be 2 or 3");
        for (int a = 0; a < d; ++a)
            if (sides[a] < 2) throw ParamError("box sides must be >= 2");
        for (int a = d; a < 3; ++a) {
            sides[a] = 1;
            origin[a] = 0;
        }
    }

    static LatticeBox square(int dim, std::int64_t side) {
        return LatticeBox(dim, {0, 0, 0}, {side, side, side});
    }

    std::int64_t vertex_count() const {
        std::int64_t n = 1;
        for (int a = 0; a < d; ++a) n *= sides[a];
        return n;
    }

    // Flattening stride of axis a.
    std::int64_t stride(int a) const {
        std::int64_t s = 1;
        for (int b = a + 1; b < d; ++b) s *= sides[b];
        return s;
    }

    std::int64_t index_of_local(const Coord& c) const {
        std::int64_t idx = 0;
        for (int a = 0; a < d; ++a) idx = idx * sides[a] + c[a];
        return idx;
    }

    Coord local_of_index(std::int64_t idx) const {
        Coord c{0, 0, 0};
        for (int a = d - 1; a >= 0; --a) {
            c[a] = idx % sides[a];
            idx /= sides[a];
        }
        return c;
    }

    Coord coord_of_index(std::int64_t idx) const {
        Coord c = local_of_index(idx);
        for (int a = 0; a < d; ++a) c[a] += origin[a];
        return c;
    }

    bool contains(const Coord& x) const {
        for (int a = 0; a < d; ++a)
            if (x[a] < origin[a] || x[a] >= origin[a] + sides[a]) return false;
        return true;
    }

    std::int64_t index_of(const Coord& x) const {
        Coord c = x;
        for (int a = 0; a < d; ++a) c[a] -= origin[a];
        return index_of_local(c);
    }

    // Bonds in direction k (1-based axis k-1) have base vertices with local
    // coordinate c[k-1] < sides[k-1]-1.
    std::int64_t bond_count(int k) const {
        std::int64_t n = 1;
        for (int a = 0; a < d; ++a) n *= (a == k - 1) ? sides[a] - 1 : sides[a];
        return n;
    }

    std::int64_t bond_count_total() const {
        std::int64_t n = 0;
        for (int k = 1; k <= d; ++k) n += bond_count(k);
        return n;
    }

    bool operator==(const LatticeBox& o) const {
        return d == o.d && origin == o.origin && sides == o.sides;
    }
};

// Triadic cube of side 3^m centered at z in 3^m Z^d; its vertex set is
// z + [-(3^m-1)/2, (3^m-1)/2]^d.
struct TriadicCube {
    int level = 0;
    int d = 2;
    Coord center{0, 0, 0};

    std::int64_t side() const {
        std::int64_t s = 1;
        for (int i = 0; i < level; ++i) s *= 3;
        return s;
    }

    std::int64_t half() const { return (side() - 1) / 2; }

    Coord lo() const {
        Coord c = center;
        for (int a = 0; a < d; ++a) c[a] -= half();
        return c;
    }

    Coord hi() const { // inclusive
        Coord c = center;
        for (int a = 0; a < d; ++a) c[a] += half();
        return c;
    }

    bool contains(const Coord& x) const {
        for (int a = 0; a < d; ++a)
            if (x[a] < center[a] - half() || x[a] > center[a] + half()) return false;
        return true;
    }

    std::int64_t volume() const {
        std::int64_t v = 1;
        for (int a = 0; a < d; ++a) v *= side();
        return v;
    }

    bool operator==(const TriadicCube& o) const {
        return level == o.level && d == o.d && center == o.center;
    }
};

inline std::int64_t pow3(int m) {
    std::int64_t s = 1;
    for (int i = 0; i < m; ++i) s *= 3;
    return s;
}

// The unique level-m triadic cube containing x.
inline TriadicCube triadic_cube_of(const Coord& x, int m, int d) {
    if (m < 0) throw ParamError("triadic level must be >= 0");
    const std::int64_t s = pow3(m);
    const std::int64_t h = (s - 1) / 2;
    TriadicCube q;
    q.level = m;
    q.d = d;
    for (int a = 0; a < d; ++a) {
        std::int64_t v = x[a] + h;
        std::int64_t n = v >= 0 ? v / s : -((-v + s - 1) / s);
        q.center[a] = n * s;
    }
    return q;
}

// ell^infinity distance between coordinate tuples.
inline std::int64_t linf_dist(const Coord& a, const Coord& b, int d) {
    std::int64_t m = 0;
    for (int i = 0; i < d; ++i) {
        std::int64_t v = a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
        if (v > m) m = v;
    }
    return m;
}

inline double l2_dist_sq(const Coord& a, const Coord& b, int d) {
    double s = 0;
    for (int i = 0; i < d; ++i) {
        double v = double(a[i] - b[i]);
        s += v * v;
    }
    return s;
}

inline bool lex_less(const Coord& a, const Coord& b, int d) {
    for (int i = 0; i < d; ++i) {
        if (a[i] != b[i]) return a[i] < b[i];
    }
    return false;
}

} // namespace perchom
