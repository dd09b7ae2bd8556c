#include "iotnat/error.hpp"

namespace iotnat {

namespace {
std::string compose(const std::string& code, const std::string& detail) {
  return detail.empty() ? code : code + ": " + detail;
}
}  // namespace

Error::Error(ErrorKind kind, std::string code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), kind_(kind), code_(std::move(code)), detail_(detail) {}

void throw_data_error(std::string code, const std::string& detail) {
  throw Error(ErrorKind::data, std::move(code), detail);
}
void throw_usage_error(std::string code, const std::string& detail) {
  throw Error(ErrorKind::usage, std::move(code), detail);
}
void throw_io_error(std::string code, const std::string& detail) {
  throw Error(ErrorKind::io, std::move(code), detail);
}

}  // namespace iotnat
