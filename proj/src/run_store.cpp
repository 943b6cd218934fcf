#include "tablequake/run_store.hpp"

#include <bit>
#include <cstring>
#include <set>
#include <tuple>

#include "tablequake/error.hpp"
#include "tablequake/io.hpp"

namespace tablequake {

namespace {

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[i]);
  return v;
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    v = ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
  return v;
}

}  // namespace

std::string hash_hex(std::uint64_t h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = kDigits[h & 0xF];
  return out;
}

std::uint64_t parse_hash(const nlohmann::json& j) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (!j.is_string()) throw Error(Errc::ParseError, "prompt_hash must be a hex string");
  const auto s = j.get<std::string>();
  if (s.empty() || s.size() > 16) throw Error(Errc::ParseError, "bad prompt_hash '" + s + "'");
  std::uint64_t v = 0;
  for (const char c : s) {
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<std::uint64_t>(c - 'A' + 10);
    else throw Error(Errc::ParseError, "bad prompt_hash '" + s + "'");
  }
  return v;
}

nlohmann::json record_to_json(const RunRecord& r) {
  nlohmann::json j;
  j["instance_id"] = r.instance_id;
  j["kind"] = kind_name(r.kind);
  j["shots"] = r.shots;
  j["model_id"] = r.model_id;
  j["prompt_hash"] = hash_hex(r.prompt_hash);
  j["prediction"] = r.prediction;
  j["trace_ref"] = r.trace_ref ? nlohmann::json(*r.trace_ref) : nlohmann::json();
  return j;
}

RunRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ParseError, "record must be a JSON object");
  RunRecord r;
  try {
    r.instance_id = j.at("instance_id").get<std::string>();
    r.kind = kind_from_name(j.at("kind").get<std::string>());
    r.shots = j.at("shots").get<int>();
    r.model_id = j.at("model_id").get<std::string>();
    r.prompt_hash = parse_hash(j.at("prompt_hash"));
    r.prediction = j.at("prediction").get<std::string>();
    if (auto it = j.find("trace_ref"); it != j.end() && !it->is_null())
      r.trace_ref = it->get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
  if (r.shots < 0 || r.shots > 3) throw Error(Errc::ParseError, "shots must be in 0..3");
  return r;
}

std::string encode_records(std::span<const RunRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<RunRecord> decode_records(std::string_view jsonl) {
  std::vector<RunRecord> out;
  std::set<std::tuple<std::string, Kind, int, std::string>> keys;
  std::size_t pos = 0, line_no = 0;
  while (pos < jsonl.size()) {
    auto eol = jsonl.find('\n', pos);
    if (eol == std::string_view::npos) eol = jsonl.size();
    const auto line = jsonl.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    RunRecord r;
    try {
      if (j.is_discarded()) throw Error(Errc::ParseError, "invalid JSON");
      r = record_from_json(j);
    } catch (const Error& e) {
      throw Error(Errc::MalformedLine, "line " + std::to_string(line_no) + ": " + e.detail());
    }
    if (!keys.emplace(r.instance_id, r.kind, r.shots, r.model_id).second)
      throw Error(Errc::DuplicateKey, "line " + std::to_string(line_no) + ": (" + r.instance_id +
                                          ", " + std::string(kind_name(r.kind)) + ", " +
                                          std::to_string(r.shots) + ", " + r.model_id + ")");
    out.push_back(std::move(r));
  }
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const RunRecord> records) {
  // Validate before touching the file so a bad batch never lands on disk.
  const auto text = encode_records(records);
  decode_records(text);
  io::write_file_atomic(path, text);
}

std::vector<RunRecord> read_records(const std::filesystem::path& path) {
  return decode_records(io::read_file(path));
}

std::string encode_trace(const AttentionTrace& trace) {
  const nlohmann::json manifest = {
      {"layers", trace.layers()},   {"heads", trace.heads()},
      {"seq_len", trace.seq_len()}, {"prompt_len", trace.prompt_len()},
      {"dtype", "f32"},             {"layout", "layer-major row-major"},
      {"causal", trace.causal()},
  };
  const auto manifest_text = manifest.dump();
  std::string out;
  out.reserve(kTraceMagic.size() + 8 + manifest_text.size() + trace.data().size() * 4);
  out += kTraceMagic;
  put_u64_le(out, manifest_text.size());
  out += manifest_text;
  const std::size_t blob_at = out.size();
  out.resize(blob_at + trace.data().size() * 4);
  char* dst = out.data() + blob_at;
  for (const float v : trace.data()) {
    const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(v));
    std::memcpy(dst, &bits, 4);
    dst += 4;
  }
  return out;
}

AttentionTrace decode_trace(std::string_view bytes) {
  if (bytes.size() < kTraceMagic.size() + 8 || bytes.substr(0, kTraceMagic.size()) != kTraceMagic)
    throw Error(Errc::BadMagic, "not an ATTNTRC1 container");
  const std::uint64_t manifest_len = get_u64_le(bytes.substr(kTraceMagic.size(), 8));
  const std::size_t manifest_at = kTraceMagic.size() + 8;
  if (manifest_len > bytes.size() - manifest_at)
    throw Error(Errc::ManifestMismatch, "manifest length exceeds container size");
  const auto manifest = nlohmann::json::parse(bytes.substr(manifest_at, manifest_len), nullptr,
                                              false);
  if (manifest.is_discarded() || !manifest.is_object())
    throw Error(Errc::ManifestMismatch, "manifest is not a JSON object");

  std::size_t layers = 0, heads = 0, seq_len = 0;
  std::optional<std::size_t> prompt_len;
  bool causal = false;
  try {
    layers = manifest.at("layers").get<std::size_t>();
    heads = manifest.at("heads").get<std::size_t>();
    seq_len = manifest.at("seq_len").get<std::size_t>();
    causal = manifest.value("causal", false);
    if (manifest.contains("prompt_len")) prompt_len = manifest.at("prompt_len").get<std::size_t>();
    if (manifest.value("dtype", std::string("f32")) != "f32")
      throw Error(Errc::ManifestMismatch, "dtype must be f32");
    if (manifest.value("layout", std::string("layer-major row-major")) != "layer-major row-major")
      throw Error(Errc::ManifestMismatch, "unsupported layout");
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ManifestMismatch, e.what());
  }

  const auto blob = bytes.substr(manifest_at + manifest_len);
  const std::size_t count = layers * heads * seq_len * seq_len;
  if (blob.size() != count * 4)
    throw Error(Errc::ManifestMismatch, "blob has " + std::to_string(blob.size()) +
                                            " bytes, manifest implies " +
                                            std::to_string(count * 4));
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, blob.data() + 4 * i, 4);
    data[i] = std::bit_cast<float>(to_little(bits));
  }
  return AttentionTrace(layers, heads, seq_len, std::move(data), causal, prompt_len);
}

void write_trace(const std::filesystem::path& path, const AttentionTrace& trace) {
  io::write_file_atomic(path, encode_trace(trace));
}

AttentionTrace read_trace(const std::filesystem::path& path) {
  return decode_trace(io::read_file(path));
}

}  // namespace tablequake
