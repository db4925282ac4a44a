#include "perchom/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace perchom {

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

} // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void save_field(const FieldFile& f, const std::string& path) {
    const std::int64_t n = [&] {
        std::int64_t v = 1;
        for (int a = 0; a < f.d; ++a) v *= f.sides[a];
        return v;
    }();
    if (static_cast<std::int64_t>(f.values.size()) != n)
        throw ShapeError("field size does not match sides");

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "PERCFLD v1 d=" << f.d << " sides=";
    for (int a = 0; a < f.d; ++a) os << (a ? "," : "") << f.sides[a];
    os << " t=" << format_double(f.t) << " y=";
    for (int a = 0; a < f.d; ++a) os << (a ? "," : "") << f.y[a];
    os << " method=" << f.method << "\n";
    for (std::int64_t i = 0; i < n; ++i)
        write_le_double(os, f.values[static_cast<std::size_t>(i)]);
    if (!os) throw IoError("write failure on " + path);

    if (!f.mask.empty()) {
        if (static_cast<std::int64_t>(f.mask.size()) != n)
            throw ShapeError("mask size does not match sides");
        std::ofstream ms(path + ".mask", std::ios::binary);
        if (!ms) throw IoError("cannot open " + path + ".mask for writing");
        ms << "PERCMSK v1 d=" << f.d << " sides=";
        for (int a = 0; a < f.d; ++a) ms << (a ? "," : "") << f.sides[a];
        ms << "\n";
        ms.write(reinterpret_cast<const char*>(f.mask.data()),
                 static_cast<std::streamsize>(f.mask.size()));
        if (!ms) throw IoError("write failure on " + path + ".mask");
    }
}

FieldFile load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::string header;
    std::getline(is, header);
    std::istringstream hs(header);
    std::string magic, ver;
    hs >> magic >> ver;
    if (magic != "PERCFLD" || ver != "v1")
        throw IoError("header mismatch: expected PERCFLD v1");

    FieldFile f;
    f.d = 0;
    std::string tok;
    while (hs >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw IoError("malformed header token: " + tok);
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "d") f.d = std::stoi(val);
        else if (key == "sides" || key == "y") {
            std::istringstream vs(val);
            std::string part;
            int a = 0;
            Coord c{0, 0, 0};
            while (std::getline(vs, part, ',')) c[a++] = std::stoll(part);
            (key == "sides" ? f.sides : f.y) = c;
        } else if (key == "t") f.t = std::stod(val);
        else if (key == "method") f.method = val;
        else throw IoError("unknown header key: " + key);
    }
    if (f.d != 2 && f.d != 3) throw IoError("header mismatch: bad dimension");
    std::int64_t n = 1;
    for (int a = 0; a < f.d; ++a) {
        if (f.sides[a] < 1) throw IoError("header mismatch: bad sides");
        n *= f.sides[a];
    }
    f.values.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        f.values[static_cast<std::size_t>(i)] = read_le_double(is);
    char extra;
    if (is.read(&extra, 1)) throw IoError("trailing bytes after payload");

    std::ifstream ms(path + ".mask", std::ios::binary);
    if (ms) {
        std::string mh;
        std::getline(ms, mh);
        if (mh.rfind("PERCMSK v1", 0) != 0)
            throw IoError("header mismatch: expected PERCMSK v1");
        f.mask.resize(static_cast<std::size_t>(n));
        ms.read(reinterpret_cast<char*>(f.mask.data()), n);
        if (!ms) throw IoError("truncated mask payload");
    }
    return f;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (is) {
        is.read(buf, sizeof buf);
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        os << content;
        if (!os) throw IoError("write failure on " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename " + tmp + " to " + path);
}

CsvWriter::CsvWriter(std::vector<std::string> columns) : n_cols(columns.size()) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) buf += ",";
        buf += columns[i];
    }
    buf += "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
    if (values.size() != n_cols) throw ShapeError("csv row arity mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) buf += ",";
        buf += format_double(values[i]);
    }
    buf += "\n";
}

void CsvWriter::row_mixed(const std::vector<std::string>& values) {
    if (values.size() != n_cols) throw ShapeError("csv row arity mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) buf += ",";
        buf += values[i];
    }
    buf += "\n";
}

std::string CsvWriter::str() const { return buf; }

} // namespace perchom
