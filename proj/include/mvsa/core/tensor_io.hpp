#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "mvsa/core/tensor.hpp"

namespace mvsa {

// Binary layout: "MVST", u8 version (1), u8 dtype (1=f32, 2=f64), u8 rank,
// rank x u32 LE extents, then row-major LE scalars.
inline constexpr std::uint8_t kTensorFormatVersion = 1;

template <typename T>
std::string encode_tensor(const BasicTensor<T>& t);

/// Decodes into the requested scalar type. A stored f32 read as f64 (or the
/// reverse) is converted; a caller needing the on-disk dtype uses decode_any.
template <typename T>
BasicTensor<T> decode_tensor(const std::string& bytes);

using AnyTensor = std::variant<Tensor, Tensor64>;
AnyTensor decode_any(const std::string& bytes);

template <typename T>
void write_tensor(const std::filesystem::path& path, const BasicTensor<T>& t);

template <typename T>
BasicTensor<T> read_tensor(const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::string& bytes);

}  // namespace mvsa
