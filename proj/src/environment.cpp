#include "perchom/environment.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace perchom {

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline double to_unit(std::uint64_t h) {
    return double(h >> 11) * 0x1.0p-53;
}

} // namespace

double hash_uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                    std::uint64_t d) {
    std::uint64_t h = mix64(a);
    h = combine(h, b);
    h = combine(h, c);
    h = combine(h, d);
    return to_unit(h);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return combine(mix64(seed), stream);
}

std::string law_tag(Law law) {
    return law == Law::BernoulliUnit ? "bernoulli-unit" : "uniform-on-[lambda,1]";
}

Law law_from_tag(const std::string& tag) {
    if (tag == "bernoulli-unit") return Law::BernoulliUnit;
    if (tag == "uniform-on-[lambda,1]" || tag == "uniform") return Law::UniformOnLambdaOne;
    throw ParamError("unknown law tag: " + tag);
}

double bond_conductance(std::uint64_t seed, double p, double lambda, Law law,
                        const Coord& base, int k) {
    std::uint64_t h = mix64(seed);
    h = combine(h, static_cast<std::uint64_t>(law == Law::BernoulliUnit ? 1 : 2));
    h = combine(h, static_cast<std::uint64_t>(k));
    for (int a = 0; a < 3; ++a) h = combine(h, static_cast<std::uint64_t>(base[a]));
    const double u_open = to_unit(h);
    if (u_open >= p) return 0.0;
    if (law == Law::BernoulliUnit) return 1.0;
    const double u_val = to_unit(mix64(h ^ 0xd6e8feb86659fd93ULL));
    return lambda + (1.0 - lambda) * u_val;
}

void subcritical_guard(int d, double p, bool force) {
    if (force) return;
    if (d == 2 && p <= 0.51)
        throw SubcriticalError(
            "p <= 0.51 is at or below the d=2 bond percolation threshold 1/2; "
            "pass force to run anyway");
}

Environment generate_environment(const LatticeBox& box, double p, double lambda,
                                 Law law, std::uint64_t seed) {
    if (!(p > 0.0 && p <= 1.0)) throw ParamError("p must lie in (0,1]");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ParamError("lambda must lie in (0,1]");

    Environment env;
    env.box = box;
    env.p = p;
    env.lambda = lambda;
    env.law = law;
    env.seed = seed;

    const std::int64_t n = box.vertex_count();
    env.cond.assign(static_cast<std::size_t>(box.d),
                    std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (int k = 1; k <= box.d; ++k) {
        auto& w = env.cond[static_cast<std::size_t>(k - 1)];
        for (std::int64_t i = 0; i < n; ++i) {
            Coord c = box.local_of_index(i);
            if (c[k - 1] >= box.sides[k - 1] - 1) continue; // far face, no bond
            Coord abs = c;
            for (int a = 0; a < box.d; ++a) abs[a] += box.origin[a];
            w[static_cast<std::size_t>(i)] =
                bond_conductance(seed, p, lambda, law, abs, k);
        }
    }
    return env;
}

double Environment::vertex_rate(std::int64_t idx) const {
    double r = 0.0;
    const Coord c = box.local_of_index(idx);
    for (int k = 1; k <= box.d; ++k) {
        const auto& w = cond[static_cast<std::size_t>(k - 1)];
        if (c[k - 1] < box.sides[k - 1] - 1)
            r += w[static_cast<std::size_t>(idx)];
        if (c[k - 1] > 0)
            r += w[static_cast<std::size_t>(idx - box.stride(k - 1))];
    }
    return r;
}

namespace {

void write_le_double(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_le_double(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw IoError("truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void save_environment(const Environment& env, const std::string& path) {
    for (int a = 0; a < env.box.d; ++a)
        if (env.box.origin[a] != 0)
            throw IoError("PERCENV files require an origin-0 box");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "PERCENV v1 d=" << env.box.d << " sides=";
    for (int a = 0; a < env.box.d; ++a)
        os << (a ? "," : "") << env.box.sides[a];
    os << " p=" << fmt_double(env.p) << " lambda=" << fmt_double(env.lambda)
       << " law=" << law_tag(env.law) << " seed=" << env.seed << "\n";
    for (int k = 1; k <= env.box.d; ++k) {
        const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
        const std::int64_t n = env.box.vertex_count();
        for (std::int64_t i = 0; i < n; ++i) {
            Coord c = env.box.local_of_index(i);
            if (c[k - 1] >= env.box.sides[k - 1] - 1) continue;
            write_le_double(os, w[static_cast<std::size_t>(i)]);
        }
    }
    if (!os) throw IoError("write failure on " + path);
}

Environment load_environment(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string header;
    std::getline(is, header);
    std::istringstream hs(header);
    std::string magic, ver;
    hs >> magic >> ver;
    if (magic != "PERCENV" || ver != "v1")
        throw IoError("header mismatch: expected PERCENV v1");

    int d = 0;
    Coord sides{0, 0, 0};
    double p = 0, lambda = 0;
    std::string law_s;
    std::uint64_t seed = 0;
    std::string tok;
    while (hs >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw IoError("malformed header token: " + tok);
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "d") d = std::stoi(val);
        else if (key == "sides") {
            std::istringstream vs(val);
            std::string part;
            int a = 0;
            while (std::getline(vs, part, ',')) sides[a++] = std::stoll(part);
        } else if (key == "p") p = std::stod(val);
        else if (key == "lambda") lambda = std::stod(val);
        else if (key == "law") law_s = val;
        else if (key == "seed") seed = std::stoull(val);
        else throw IoError("unknown header key: " + key);
    }
    if (d != 2 && d != 3) throw IoError("header mismatch: bad dimension");

    Environment env;
    env.box = LatticeBox(d, {0, 0, 0}, sides);
    env.p = p;
    env.lambda = lambda;
    env.law = law_from_tag(law_s);
    env.seed = seed;
    const std::int64_t n = env.box.vertex_count();
    env.cond.assign(static_cast<std::size_t>(d),
                    std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (int k = 1; k <= d; ++k) {
        auto& w = env.cond[static_cast<std::size_t>(k - 1)];
        for (std::int64_t i = 0; i < n; ++i) {
            Coord c = env.box.local_of_index(i);
            if (c[k - 1] >= env.box.sides[k - 1] - 1) continue;
            w[static_cast<std::size_t>(i)] = read_le_double(is);
        }
    }
    char extra;
    if (is.read(&extra, 1)) throw IoError("trailing bytes after payload");
    return env;
}

} // namespace perchom
