#pragma once

#include <stdexcept>
#include <string>

namespace lerkit {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A parameter violates its domain; message names the offending field.
struct parameter_domain_error : error {
    parameter_domain_error(const std::string& field, const std::string& why)
        : error(field + ": " + why), field(field) {}
    std::string field;
};

// Trace cannot be fitted at all (span too small, no dip, ...).
struct unfittable_trace_error : error {
    using error::error;
};

// Degenerate point set handed to a geometric fit.
struct geometry_error : error {
    using error::error;
};

// Fit cannot identify one or more parameters from the data.
struct degenerate_fit_error : error {
    degenerate_fit_error(const std::string& param, const std::string& why)
        : error("unidentifiable parameter " + param + ": " + why), parameter(param) {}
    std::string parameter;
};

// Photon energy at or above 2*Delta: outside Mattis-Bardeen validity.
struct pair_breaking_error : error {
    using error::error;
};

struct simulation_error : error {
    using error::error;
};

// File parsing failure; line is 1-based, 0 when not line-specific.
struct parse_error : error {
    parse_error(const std::string& what, std::size_t line = 0)
        : error(line ? what + " (line " + std::to_string(line) + ")" : what), line(line) {}
    std::size_t line;
};

} // namespace lerkit
