#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tablequake {

enum class Errc {
  RaggedInput,
  EmptyInput,
  Encoding,
  DuplicateId,
  ParseError,
  AnswerNotInTable,
  MissingCounterfactual,
  UnknownTemplate,
  UnknownKind,
  IdMismatch,
  ShapeMismatch,
  LengthMismatch,
  NotAProbabilityVector,
  InsufficientDefinedCells,
  DuplicateKey,
  MalformedLine,
  ManifestMismatch,
  BadMagic,
  BadBins,
  BadShape,
  MissingOriginal,
  InvalidArgument,
  Io,
};

std::string_view errc_name(Errc code);

// Every failure raised by the library carries a category code; the CLI maps
// Errc::Io to exit status 2 and everything else to 1.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Errc code() const noexcept { return code_; }
  // Message without the category prefix, for re-wrapping with more context.
  const std::string& detail() const noexcept { return detail_; }
  bool is_io() const noexcept { return code_ == Errc::Io; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace tablequake
