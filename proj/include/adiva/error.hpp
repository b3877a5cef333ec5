#pragma once

#include <stdexcept>
#include <string>

namespace adiva {

/// Error families. Each family maps to one stable CLI exit code.
enum class ErrorFamily {
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kIo = 5,
};

/// Base for every error the library throws. `kind` is a stable identifier
/// (e.g. "BadMagic", "ShapeMismatch") suitable for structured error records.
class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, std::string kind, const std::string& detail)
      : std::runtime_error(kind + ": " + detail),
        family_(family),
        kind_(std::move(kind)),
        detail_(detail) {}

  ErrorFamily family() const noexcept { return family_; }
  const std::string& kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }
  int exit_code() const noexcept { return static_cast<int>(family_); }

 private:
  ErrorFamily family_;
  std::string kind_;
  std::string detail_;
};

inline Error config_error(std::string kind, const std::string& detail) {
  return Error(ErrorFamily::kConfig, std::move(kind), detail);
}
inline Error data_error(std::string kind, const std::string& detail) {
  return Error(ErrorFamily::kData, std::move(kind), detail);
}
inline Error numeric_error(std::string kind, const std::string& detail) {
  return Error(ErrorFamily::kNumeric, std::move(kind), detail);
}
inline Error io_error(std::string kind, const std::string& detail) {
  return Error(ErrorFamily::kIo, std::move(kind), detail);
}

inline Error shape_mismatch(const std::string& detail) {
  return data_error("ShapeMismatch", detail);
}

}  // namespace adiva
