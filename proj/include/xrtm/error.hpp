#pragma once

#include <stdexcept>
#include <string>

namespace xrtm {

enum class ErrorKind {
    Format,
    Shape,
    Io,
    Parameter,
    Domain,
    DegenerateScale,
    EmptyComplement,
    Geometry,
    Data,
    Numerical,
    NotFound,
    Correlation,
    Config,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a kind so the CLI can map it
/// onto an exit code without string matching.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace xrtm
