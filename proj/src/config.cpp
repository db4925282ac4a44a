#include "perchom/config.hpp"

#include <fstream>
#include <sstream>

#include "perchom/io.hpp"

namespace perchom {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& v, int line) {
    std::vector<double> out;
    std::istringstream is(v);
    std::string part;
    while (std::getline(is, part, ',')) {
        part = trim(part);
        if (part.empty()) throw ConfigError("empty list entry", line);
        try {
            out.push_back(std::stod(part));
        } catch (const std::exception&) {
            throw ConfigError("bad number: " + part, line);
        }
    }
    return out;
}

double parse_num(const std::string& v, int line) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError("bad number: " + v, line);
    }
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("bad boolean: " + v, line);
}

const char* kExperiments[] = {"theta",   "density-scaling", "partition",
                              "cell",    "corrector",       "flux-norm",
                              "kernel",  "walks",           "lclt",
                              "rate",    "green",           "dirichlet",
                              "report-all"};

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    bool have_experiment = false;

    while (std::getline(is, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (val.empty()) throw ConfigError("empty value for " + key, line_no);

        if (key == "experiment") {
            bool known = false;
            for (const char* e : kExperiments)
                if (val == e) known = true;
            if (!known) throw ConfigError("unknown experiment: " + val, line_no);
            c.experiment = val;
            have_experiment = true;
        } else if (key == "d") c.d = static_cast<int>(parse_num(val, line_no));
        else if (key == "p") c.p = parse_num(val, line_no);
        else if (key == "lambda") c.lambda = parse_num(val, line_no);
        else if (key == "law") {
            try {
                c.law = law_from_tag(val);
            } catch (const ParamError& e) {
                throw ConfigError(e.what(), line_no);
            }
        } else if (key == "box_side")
            c.box_side = static_cast<std::int64_t>(parse_num(val, line_no));
        else if (key == "seed")
            c.seed = static_cast<std::uint64_t>(parse_num(val, line_no));
        else if (key == "n_seeds")
            c.n_seeds = static_cast<int>(parse_num(val, line_no));
        else if (key == "n_samples")
            c.n_samples = static_cast<int>(parse_num(val, line_no));
        else if (key == "t_grid") c.t_grid = parse_list(val, line_no);
        else if (key == "r_grid") c.r_grid = parse_list(val, line_no);
        else if (key == "m") c.m = static_cast<int>(parse_num(val, line_no));
        else if (key == "m_lo") c.m_lo = static_cast<int>(parse_num(val, line_no));
        else if (key == "m_hi") c.m_hi = static_cast<int>(parse_num(val, line_no));
        else if (key == "q") c.q = parse_num(val, line_no);
        else if (key == "delta") c.delta = parse_num(val, line_no);
        else if (key == "kappa") c.kappa = parse_num(val, line_no);
        else if (key == "t") c.t = parse_num(val, line_no);
        else if (key == "tol") c.tol = parse_num(val, line_no);
        else if (key == "c0") c.c0 = parse_num(val, line_no);
        else if (key == "t_max") c.t_max = parse_num(val, line_no);
        else if (key == "sigma2") c.sigma2 = parse_num(val, line_no);
        else if (key == "theta") c.theta = parse_num(val, line_no);
        else if (key == "n_steps")
            c.n_steps = static_cast<int>(parse_num(val, line_no));
        else if (key == "force") c.force = parse_bool(val, line_no);
        else if (key == "out_dir") c.out_dir = val;
        else throw ConfigError("unknown key: " + key, line_no);
    }
    if (!have_experiment) throw ConfigError("missing experiment key");
    if (c.d != 2 && c.d != 3) throw ConfigError("d must be 2 or 3");
    if (!(c.p > 0.0 && c.p <= 1.0)) throw ConfigError("p must lie in (0,1]");
    if (!(c.lambda > 0.0 && c.lambda <= 1.0))
        throw ConfigError("lambda must lie in (0,1]");
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os << "experiment = " << c.experiment << "\n";
    os << "d = " << c.d << "\n";
    os << "p = " << format_double(c.p) << "\n";
    os << "lambda = " << format_double(c.lambda) << "\n";
    os << "law = " << law_tag(c.law) << "\n";
    os << "box_side = " << c.box_side << "\n";
    os << "seed = " << c.seed << "\n";
    os << "n_seeds = " << c.n_seeds << "\n";
    os << "n_samples = " << c.n_samples << "\n";
    auto list = [&](const char* key, const std::vector<double>& v) {
        if (v.empty()) return;
        os << key << " = ";
        for (std::size_t i = 0; i < v.size(); ++i)
            os << (i ? "," : "") << format_double(v[i]);
        os << "\n";
    };
    list("t_grid", c.t_grid);
    list("r_grid", c.r_grid);
    os << "m = " << c.m << "\n";
    os << "m_lo = " << c.m_lo << "\n";
    os << "m_hi = " << c.m_hi << "\n";
    os << "q = " << format_double(c.q) << "\n";
    os << "delta = " << format_double(c.delta) << "\n";
    os << "kappa = " << format_double(c.kappa) << "\n";
    os << "t = " << format_double(c.t) << "\n";
    os << "tol = " << format_double(c.tol) << "\n";
    os << "c0 = " << format_double(c.c0) << "\n";
    if (c.t_max > 0) os << "t_max = " << format_double(c.t_max) << "\n";
    if (c.sigma2 > 0) os << "sigma2 = " << format_double(c.sigma2) << "\n";
    if (c.theta > 0) os << "theta = " << format_double(c.theta) << "\n";
    os << "n_steps = " << c.n_steps << "\n";
    os << "force = " << (c.force ? "true" : "false") << "\n";
    os << "out_dir = " << c.out_dir << "\n";
    return os.str();
}

} // namespace perchom
