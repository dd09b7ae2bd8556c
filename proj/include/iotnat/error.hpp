#pragma once

#include <stdexcept>
#include <string>

namespace iotnat {

// Broad failure class; the CLI maps these onto exit codes.
enum class ErrorKind {
  usage,   // bad flags or configuration values
  data,    // malformed or insufficient input data
  io,      // filesystem / socket failures
};

// Every library failure carries a short machine-readable code such as
// "insufficient-data" or "corrupt-artifact" plus a free-form detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& detail = {});

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string code_;
  std::string detail_;
};

[[noreturn]] void throw_data_error(std::string code, const std::string& detail = {});
[[noreturn]] void throw_usage_error(std::string code, const std::string& detail = {});
[[noreturn]] void throw_io_error(std::string code, const std::string& detail = {});

}  // namespace iotnat
