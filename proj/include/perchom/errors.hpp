#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace perchom {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParamError : Error {
    using Error::Error;
};

struct GeometryError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct SubcriticalError : Error {
    using Error::Error;
};

struct StatsError : Error {
    using Error::Error;
};

struct InputError : Error {
    using Error::Error;
};

struct OverflowError : Error {
    using Error::Error;
};

struct QuadratureError : Error {
    using Error::Error;
};

struct CoarseningError : Error {
    using Error::Error;
};

struct ConstructionError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct SolverError : Error {
    SolverError(const std::string& msg, std::vector<double> history)
        : Error(msg), residual_history(std::move(history)) {}
    std::vector<double> residual_history;
};

struct ConfigError : Error {
    ConfigError(const std::string& msg, int line_no = 0)
        : Error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg),
          line(line_no) {}
    int line;
};

} // namespace perchom
