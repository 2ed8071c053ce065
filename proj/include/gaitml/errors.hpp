#pragma once

#include <stdexcept>
#include <string>

namespace gaitml {

// Every library failure derives from gaitml::error. The CLI maps the
// subclasses onto process exit codes (see exit_code_for).
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input: schema violations, contract breaches, leakage, config errors.
struct validation_error : error {
    using error::error;
};

struct parse_error : validation_error {
    parse_error(const std::string& what_msg, std::size_t line)
        : validation_error(what_msg), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct dimension_error : validation_error {
    using validation_error::validation_error;
};

struct degenerate_geometry_error : validation_error {
    using validation_error::validation_error;
};

struct io_error : error {
    using error::error;
};

// NaN/Inf produced by an operation, or a diverged loss.
struct numeric_error : error {
    using error::error;
};

inline int exit_code_for(const error& e) noexcept {
    if (dynamic_cast<const io_error*>(&e)) return 3;
    if (dynamic_cast<const numeric_error*>(&e)) return 4;
    return 2;
}

inline void require(bool pred, const std::string& msg) {
    if (!pred) throw validation_error(msg);
}

} // namespace gaitml
