#pragma once

#include <stdexcept>
#include <string>

namespace psadet {

// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the source location when one is known.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

#define PSADET_CHECK(cond, msg)                      \
  do {                                               \
    if (!(cond)) throw ::psadet::Error(msg);         \
  } while (0)

}  // namespace psadet
