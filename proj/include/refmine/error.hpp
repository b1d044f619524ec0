#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace refmine {

/// Input that violates one of the file formats or a documented precondition.
/// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}

  DataError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  /// 1-based line number, or 0 when the error is not tied to a line.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

}  // namespace refmine
