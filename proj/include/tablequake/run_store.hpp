#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tablequake/attention.hpp"
#include "tablequake/perturbation.hpp"

namespace tablequake {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = kFnvOffsetBasis;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= kFnvPrime;
  }
  return h;
}

// 16 lowercase hex digits; how hashes are stored in JSON so that readers
// without 64-bit integer support round-trip them.
std::string hash_hex(std::uint64_t h);
std::uint64_t parse_hash(const nlohmann::json& j);

/// One model prediction for one (instance, perturbation, shots) cell.
struct RunRecord {
  std::string instance_id;  // id of the source instance, not the perturbed output
  Kind kind = Kind::Original;
  int shots = 0;
  std::string model_id;
  std::uint64_t prompt_hash = 0;
  std::string prediction;
  std::optional<std::string> trace_ref;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

std::string encode_records(std::span<const RunRecord> records);
// Errc::MalformedLine (1-based line number) and Errc::DuplicateKey for a
// repeated (instance_id, kind, shots, model_id).
std::vector<RunRecord> decode_records(std::string_view jsonl);

void write_records(const std::filesystem::path& path, std::span<const RunRecord> records);
std::vector<RunRecord> read_records(const std::filesystem::path& path);

// Trace container: "ATTNTRC1", manifest byte length (u64 little-endian),
// JSON manifest, then little-endian float32 values ordered
// [layer][head][query][key].
inline constexpr std::string_view kTraceMagic = "ATTNTRC1";

std::string encode_trace(const AttentionTrace& trace);
AttentionTrace decode_trace(std::string_view bytes);

void write_trace(const std::filesystem::path& path, const AttentionTrace& trace);
AttentionTrace read_trace(const std::filesystem::path& path);

}  // namespace tablequake
