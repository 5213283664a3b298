#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protood/linalg.hpp"

namespace protood {

enum class Modality { image, text };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

struct EmbeddingRecord {
  // OODEMB1 does not store ids; records read from disk are named by row index.
  std::string id;
  // Absent for OOD / unlabeled rows.
  std::optional<std::size_t> label;
  Vec vector;

  bool operator==(const EmbeddingRecord&) const = default;
};

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<std::string> class_names;
  Modality modality = Modality::image;
  bool normalized = false;
  std::vector<EmbeddingRecord> records;

  std::size_t class_count() const noexcept { return class_names.size(); }
  std::size_t size() const noexcept { return records.size(); }

  // Throws on any broken invariant (dimension, finiteness, labels, norms,
  // duplicate class names).
  void validate() const;

  std::vector<Vec> vectors() const;

  bool operator==(const EmbeddingSet&) const = default;
};

// Appends a record whose id is its row index.
void push_record(EmbeddingSet& set, Vec vector, std::optional<std::size_t> label);

// OODEMB1 wire format:
//   "OODEMB1\n"
//   {"dim":d,"count":n,"classes":[...],"modality":"image"|"text","normalized":bool}\n
//   n*d little-endian binary32 values, row-major
//   n little-endian int32 labels, -1 when absent
std::string encode_oodemb(const EmbeddingSet& set);
EmbeddingSet decode_oodemb(std::string_view bytes);

EmbeddingSet load_embedding_set(const std::filesystem::path& path);
void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path);

// Unit-normalizes every record and sets the normalized flag. Idempotent bitwise.
EmbeddingSet normalize_set(const EmbeddingSet& set);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace protood
