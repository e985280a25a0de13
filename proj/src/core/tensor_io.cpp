#include "mvsa/core/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mvsa {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw FormatError("tensor file truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

struct Header {
  DType dtype;
  Shape shape;
  std::size_t data_offset;
};

Header parse_header(const std::string& bytes) {
  if (bytes.size() < 7 || bytes.compare(0, 4, "MVST") != 0) {
    throw FormatError("not a tensor file (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint8_t>(bytes, pos);
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported tensor format version " + std::to_string(version));
  }
  const auto code = get<std::uint8_t>(bytes, pos);
  if (code != 1 && code != 2) throw FormatError("unknown dtype code " + std::to_string(code));
  const auto rank = get<std::uint8_t>(bytes, pos);
  Header h{static_cast<DType>(code), {}, 0};
  for (int i = 0; i < rank; ++i) {
    const auto e = get<std::uint32_t>(bytes, pos);
    if (e == 0) throw FormatError("zero extent in tensor file");
    h.shape.push_back(e);
  }
  h.data_offset = pos;
  const std::size_t width = h.dtype == DType::f32 ? 4 : 8;
  const auto expected = pos + static_cast<std::size_t>(shape_numel(h.shape)) * width;
  if (bytes.size() != expected) throw FormatError("tensor payload size mismatch");
  return h;
}

template <typename Stored, typename T>
BasicTensor<T> read_payload(const std::string& bytes, const Header& h) {
  const auto n = static_cast<std::size_t>(shape_numel(h.shape));
  std::vector<Stored> raw(n);
  std::memcpy(raw.data(), bytes.data() + h.data_offset, n * sizeof(Stored));
  if constexpr (std::is_same_v<Stored, T>) {
    return BasicTensor<T>(h.shape, std::move(raw));
  } else {
    return BasicTensor<T>(h.shape, std::vector<T>(raw.begin(), raw.end()));
  }
}

}  // namespace

template <typename T>
std::string encode_tensor(const BasicTensor<T>& t) {
  if (t.rank() > 255) throw FormatError("tensor rank exceeds 255");
  std::string out = "MVST";
  put<std::uint8_t>(out, kTensorFormatVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  out.append(reinterpret_cast<const char*>(t.data()),
             static_cast<std::size_t>(t.numel()) * sizeof(T));
  return out;
}

template <typename T>
BasicTensor<T> decode_tensor(const std::string& bytes) {
  const Header h = parse_header(bytes);
  if (h.dtype == DType::f32) return read_payload<float, T>(bytes, h);
  return read_payload<double, T>(bytes, h);
}

AnyTensor decode_any(const std::string& bytes) {
  const Header h = parse_header(bytes);
  if (h.dtype == DType::f32) return read_payload<float, float>(bytes, h);
  return read_payload<double, double>(bytes, h);
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const BasicTensor<T>& t) {
  write_file_bytes(path, encode_tensor(t));
}

template <typename T>
BasicTensor<T> read_tensor(const std::filesystem::path& path) {
  return decode_tensor<T>(read_file_bytes(path));
}

template std::string encode_tensor(const Tensor&);
template std::string encode_tensor(const Tensor64&);
template Tensor decode_tensor<float>(const std::string&);
template Tensor64 decode_tensor<double>(const std::string&);
template void write_tensor(const std::filesystem::path&, const Tensor&);
template void write_tensor(const std::filesystem::path&, const Tensor64&);
template Tensor read_tensor<float>(const std::filesystem::path&);
template Tensor64 read_tensor<double>(const std::filesystem::path&);

}  // namespace mvsa
