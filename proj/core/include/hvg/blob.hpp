#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hvg/tensor.hpp"

namespace hvg {

/// Tensor blob file layout, shared by every module and by the CLI:
///   magic "HVG3D1" | u8 dtype (0=f64, 1=f32, 2=u8) | u8 ndim |
///   ndim x u64 little-endian dims | raw little-endian data.
enum class BlobDtype : uint8_t { f64 = 0, f32 = 1, u8 = 2 };

void write_blob_f64(const std::filesystem::path& path, const Tensor& t);
void write_blob_f32(const std::filesystem::path& path, const Tensor& t);
void write_blob_u8(const std::filesystem::path& path, const std::vector<int64_t>& shape,
                   const std::vector<uint8_t>& data);

/// Reads any dtype; f32 and u8 payloads are widened to f64.
Tensor read_blob(const std::filesystem::path& path);
Tensor read_blob(const std::filesystem::path& path, BlobDtype* dtype_out);

/// FNV-1a 64 over a file's bytes, hex-encoded. Used by dataset manifests.
std::string file_checksum(const std::filesystem::path& path);
std::string bytes_checksum(const void* data, size_t size);

}  // namespace hvg
