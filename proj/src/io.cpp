#include "tablequake/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "tablequake/error.hpp"

namespace tablequake {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::RaggedInput: return "RaggedInput";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::Encoding: return "Encoding";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::ParseError: return "ParseError";
    case Errc::AnswerNotInTable: return "AnswerNotInTable";
    case Errc::MissingCounterfactual: return "MissingCounterfactual";
    case Errc::UnknownTemplate: return "UnknownTemplate";
    case Errc::UnknownKind: return "UnknownKind";
    case Errc::IdMismatch: return "IdMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::NotAProbabilityVector: return "NotAProbabilityVector";
    case Errc::InsufficientDefinedCells: return "InsufficientDefinedCells";
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::ManifestMismatch: return "ManifestMismatch";
    case Errc::BadMagic: return "BadMagic";
    case Errc::BadBins: return "BadBins";
    case Errc::BadShape: return "BadShape";
    case Errc::MissingOriginal: return "MissingOriginal";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

namespace io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(Errc::Io, "read failed: " + path.string());
  return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(Errc::Io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::Io, "rename to " + path.string() + " failed: " + ec.message());
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace io
}  // namespace tablequake
