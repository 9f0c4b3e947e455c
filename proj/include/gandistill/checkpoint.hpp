#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gandistill/tensor.hpp"

namespace gandistill {

/// Versioned binary container: a JSON header plus named tensors, guarded by a
/// CRC-32 over the whole payload.
///
///   "GDCKPT\0\0" | u32 version | u64 header_len | header json
///   | u32 count | { u32 name_len | name | i32 shape[4] | u8 dtype | data }*
///   | u32 crc32
struct TensorRecord {
  std::string name;
  std::array<int, 4> shape{0, 0, 1, 1};
  bool f64 = false;
  std::vector<double> data;
};

struct Container {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json header = nlohmann::json::object();
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
};

/// Writes to a temporary sibling and renames over `path`.
void write_container(const std::filesystem::path& path, const Container& c);
/// Throws CheckpointError on missing file, bad magic, version mismatch or CRC failure.
Container read_container(const std::filesystem::path& path);

template <typename T>
void export_tensors(Container& c, const ParamList<T>& params);
template <typename T>
void export_tensors(Container& c, const BufferList<T>& buffers);

/// Copies named records into the live tensors; missing names or shape
/// mismatches throw CheckpointError.
template <typename T>
void import_tensors(const Container& c, const ParamList<T>& params);
template <typename T>
void import_tensors(const Container& c, const BufferList<T>& buffers);

}  // namespace gandistill
