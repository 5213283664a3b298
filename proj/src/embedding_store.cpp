#include "protood/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "protood/error.hpp"

namespace protood {

namespace {

constexpr std::string_view kMagic = "OODEMB1\n";

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32_le(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::image ? "image" : "text"; }

Modality modality_from_string(std::string_view s) {
  if (s == "image") return Modality::image;
  if (s == "text") return Modality::text;
  throw Error(ErrorKind::BadHeader, "unknown modality '" + std::string(s) + "'");
}

void EmbeddingSet::validate() const {
  require(dim > 0, ErrorKind::BadHeader, "dim must be positive");
  std::set<std::string> seen;
  for (const auto& name : class_names)
    require(seen.insert(name).second, ErrorKind::BadHeader, "duplicate class name '" + name + "'");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    require(r.vector.size() == dim, ErrorKind::DimMismatch,
            "record " + std::to_string(i) + " has length " + std::to_string(r.vector.size()) +
                ", expected " + std::to_string(dim));
    require(all_finite(r.vector), ErrorKind::NonFinite, "record " + std::to_string(i) + " is not finite");
    if (r.label)
      require(*r.label < class_count(), ErrorKind::BadLabel,
              "record " + std::to_string(i) + " has label " + std::to_string(*r.label));
    if (normalized)
      require(std::abs(l2_norm(r.vector) - 1.0) <= 1e-4, ErrorKind::NotNormalized,
              "record " + std::to_string(i) + " is flagged normalized but is not unit norm");
  }
}

std::vector<Vec> EmbeddingSet::vectors() const {
  std::vector<Vec> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.vector);
  return out;
}

void push_record(EmbeddingSet& set, Vec vector, std::optional<std::size_t> label) {
  set.records.push_back({std::to_string(set.records.size()), label, std::move(vector)});
}

std::string encode_oodemb(const EmbeddingSet& set) {
  set.validate();
  nlohmann::ordered_json header;
  header["dim"] = set.dim;
  header["count"] = set.records.size();
  header["classes"] = set.class_names;
  header["modality"] = std::string(to_string(set.modality));
  header["normalized"] = set.normalized;

  std::string out(kMagic);
  out += header.dump();
  out.push_back('\n');
  out.reserve(out.size() + set.records.size() * (set.dim + 1) * 4);
  for (const auto& r : set.records)
    for (double x : r.vector) put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  for (const auto& r : set.records) {
    const std::int32_t label = r.label ? static_cast<std::int32_t>(*r.label) : -1;
    put_u32_le(out, static_cast<std::uint32_t>(label));
  }
  return out;
}

EmbeddingSet decode_oodemb(std::string_view bytes) {
  require(bytes.substr(0, kMagic.size()) == kMagic, ErrorKind::BadMagic, "missing OODEMB1 magic");
  bytes.remove_prefix(kMagic.size());
  const auto eol = bytes.find('\n');
  require(eol != std::string_view::npos, ErrorKind::BadHeader, "unterminated header line");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, eol));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadHeader, e.what());
  }
  bytes.remove_prefix(eol + 1);

  static const std::set<std::string> keys = {"dim", "count", "classes", "modality", "normalized"};
  require(header.is_object() && header.size() == keys.size(), ErrorKind::BadHeader,
          "header must have exactly dim, count, classes, modality, normalized");
  for (const auto& [key, value] : header.items())
    require(keys.count(key) == 1, ErrorKind::BadHeader, "unknown header key '" + key + "'");

  EmbeddingSet set;
  std::size_t count = 0;
  try {
    require(header["dim"].is_number_unsigned() && header["count"].is_number_unsigned(),
            ErrorKind::BadHeader, "dim and count must be non-negative integers");
    set.dim = header["dim"].get<std::size_t>();
    count = header["count"].get<std::size_t>();
    set.class_names = header["classes"].get<std::vector<std::string>>();
    set.modality = modality_from_string(header["modality"].get<std::string>());
    set.normalized = header["normalized"].get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadHeader, e.what());
  }
  require(set.dim > 0, ErrorKind::BadHeader, "dim must be positive");

  const std::size_t expected = count * (set.dim + 1) * 4;
  require(bytes.size() == expected, ErrorKind::DimMismatch,
          "payload has " + std::to_string(bytes.size()) + " bytes, header implies " + std::to_string(expected));

  set.records.resize(count);
  const char* p = bytes.data();
  for (std::size_t i = 0; i < count; ++i) {
    auto& r = set.records[i];
    r.id = std::to_string(i);
    r.vector.resize(set.dim);
    for (std::size_t j = 0; j < set.dim; ++j, p += 4)
      r.vector[j] = static_cast<double>(std::bit_cast<float>(get_u32_le(p)));
  }
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    const auto label = static_cast<std::int32_t>(get_u32_le(p));
    require(label >= -1, ErrorKind::BadLabel, "label " + std::to_string(label) + " below -1");
    if (label >= 0) set.records[i].label = static_cast<std::size_t>(label);
  }
  set.validate();
  return set;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::IoError, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::IoError, "short write to '" + path.string() + "'");
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path) { return decode_oodemb(read_file(path)); }

void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_file(path, encode_oodemb(set));
}

EmbeddingSet normalize_set(const EmbeddingSet& set) {
  EmbeddingSet out = set;
  for (auto& r : out.records) r.vector = unit_normalized(r.vector);
  out.normalized = true;
  return out;
}

}  // namespace protood
