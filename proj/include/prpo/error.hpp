#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>

namespace prpo {

enum class ErrorCode {
  LengthMismatch,
  NonNormalizedDistribution,
  NegativeEntropy,
  InvalidDistribution,
  EmptySpan,
  ScoreOutOfRange,
  GroupTooSmall,
  EmptyScores,
  MissingProcessScores,
  MisalignedAdvantage,
  IncompleteGroup,
  ScoreCountMismatch,
  InvalidSegments,
  Parse,
  Config,
  Io,
};

const char* to_string(ErrorCode code);

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

// Every failure in the library surfaces as this type. `index` names the
// offending element (token position, record line, ...) when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::size_t index = kNoIndex)
      : std::runtime_error(what), code_(code), index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::size_t index_;
};

}  // namespace prpo
