#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spoi/types.hpp"

namespace spoi {

/// One named float32 tensor, row-major payload.
struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t element_count() const;
};

/// Ordered collection of tensor records. The binary layout is: magic `SPOI`,
/// version u32, then per record a u32 name length, the UTF-8 name, a u32
/// rank, u64 dims, and the float32 payload, all little-endian, until EOF.
/// Record order is part of the format so identical content is identical bytes.
/// Names under `running/` and `adam/` are reserved for model state.
struct TensorFile {
  std::uint32_t version = 1;
  std::vector<TensorRecord> records;

  const TensorRecord* find(std::string_view name) const;
  const TensorRecord& require(std::string_view name) const;  // IoError if absent

  void add(std::string name, std::vector<std::uint64_t> dims, std::vector<float> data);
  void add_matrix(std::string name, const Matd& m);
  void add_vector(std::string name, const Vecd& v);
  void add_row(std::string name, const RowVecd& v);
  /// Raw text stored as one byte per float; keeps the container single-typed.
  void add_text(std::string name, std::string_view text);

  Matd matrix(std::string_view name) const;
  Vecd vector(std::string_view name) const;
  RowVecd row(std::string_view name) const;
  std::string text(std::string_view name) const;
};

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace spoi
