#ifndef MAPGN_ERROR_HPP
#define MAPGN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace mapgn {

// Process exit codes used by the command-line tool.
enum class ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4, kInternal = 1 };

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(kind) {}

  ExitCode code() const noexcept { return code_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ExitCode code_;
  std::string kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ExitCode::kInternal, "dimension", w) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error(ExitCode::kInternal, "contract", w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ExitCode::kConfig, "config", w) {}
};

struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ExitCode::kData, "data", w) {}
  DataError(const std::string& kind, const std::string& w) : Error(ExitCode::kData, kind, w) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ExitCode::kNumeric, "numeric", w) {}
};

// Checkpoint failures are data errors with distinct kinds so callers can tell them apart.
struct CheckpointFormatError : DataError {
  explicit CheckpointFormatError(const std::string& w) : DataError("checkpoint-format", w) {}
};
struct CheckpointVersionError : DataError {
  explicit CheckpointVersionError(const std::string& w) : DataError("checkpoint-version", w) {}
};
struct CheckpointTruncatedError : DataError {
  explicit CheckpointTruncatedError(const std::string& w) : DataError("checkpoint-truncated", w) {}
};
struct VocabMismatchError : DataError {
  explicit VocabMismatchError(const std::string& w) : DataError("vocab-mismatch", w) {}
};

}  // namespace mapgn

#endif  // MAPGN_ERROR_HPP
