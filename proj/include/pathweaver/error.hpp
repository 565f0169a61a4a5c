#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pathweaver {

// Every library failure derives from Error; the CLI maps the category to an
// exit code.
enum class ErrorKind {
  kDimension,
  kContract,
  kSchema,
  kParse,
  kConfig,
  kData,
  kDivergence,
  kTransport,
  kProtocol,
  kIntegrity,
  kVersion,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::kDimension, w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ErrorKind::kContract, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::kConfig, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::kData, w) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& w) : Error(ErrorKind::kDivergence, w) {}
};
struct TransportError : Error {
  explicit TransportError(const std::string& w) : Error(ErrorKind::kTransport, w) {}
};
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error(ErrorKind::kProtocol, w) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorKind::kIntegrity, w) {}
};
struct VersionError : Error {
  explicit VersionError(const std::string& w) : Error(ErrorKind::kVersion, w) {}
};

// Malformed or invariant-violating corpus record. `line` is 1-based, 0 when
// the record did not come from a file.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& detail)
      : Error(ErrorKind::kSchema, format(line, field, detail)), line_(line), field_(std::move(field)) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(std::size_t line, const std::string& field, const std::string& detail) {
    std::string s = "schema error";
    if (line > 0) s += " at line " + std::to_string(line);
    if (!field.empty()) s += " (field '" + field + "')";
    return s + ": " + detail;
  }
  std::size_t line_;
  std::string field_;
};

// Token sequence that does not follow the ([A] action [T] topic)+ EOS grammar.
class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& detail)
      : Error(ErrorKind::kParse, "path parse error at token " + std::to_string(position) + ": " + detail),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace pathweaver
