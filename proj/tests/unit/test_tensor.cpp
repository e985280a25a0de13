#include <gtest/gtest.h>

#include <filesystem>

#include "mvsa/core/rng.hpp"
#include "mvsa/core/tensor_io.hpp"

namespace mvsa {
namespace {

TEST(Tensor, DataLengthMatchesShape) {
  Tensor t(Shape{2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<float>(3)), ConfigError);
  EXPECT_THROW(Tensor(Shape{2, -1}), ConfigError);
}

TEST(Tensor, RowMajorIndexing) {
  auto t = Tensor64::from({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at(1, 2), 5);
  EXPECT_EQ(t.at(0, 1), 1);
}

TEST(TensorFile, HeaderLayout) {
  auto t = Tensor::from({2, 1}, {1.0f, -2.0f});
  const std::string bytes = encode_tensor(t);
  ASSERT_EQ(bytes.size(), 4u + 3u + 2u * 4u + 2u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "MVST");
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[4]), 1);
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[5]), 1);
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[6]), 2);
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[7]), 2);  // extent 2, little-endian
  EXPECT_EQ(static_cast<std::uint8_t>(bytes[8]), 0);
  EXPECT_EQ(static_cast<std::uint8_t>(encode_tensor(Tensor64(Shape{1}))[5]), 2);
}

TEST(TensorFile, RoundTripIsBitExact) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Shape s;
    for (int r = rng.uniform_int(1, 4); r > 0; --r) s.push_back(rng.uniform_int(1, 5));
    Tensor64 t(s);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    EXPECT_EQ(decode_tensor<double>(encode_tensor(t)), t);
    Tensor f = t.cast<float>();
    EXPECT_EQ(decode_tensor<float>(encode_tensor(f)), f);
  }
}

TEST(TensorFile, RejectsBadMagicVersionAndTruncation) {
  std::string bytes = encode_tensor(Tensor(Shape{3}, 1.0f));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_tensor<float>(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(decode_tensor<float>(bad), FormatError);
  EXPECT_THROW(decode_tensor<float>(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST(TensorFile, DiskRoundTripAndDtype) {
  const auto path = std::filesystem::temp_directory_path() / "mvsa_tensor_test.mvst";
  Tensor64 t = Tensor64::from({2, 2}, {1, 2, 3, 4});
  write_tensor(path, t);
  EXPECT_EQ(read_tensor<double>(path), t);
  auto any = decode_any(read_file_bytes(path));
  EXPECT_TRUE(std::holds_alternative<Tensor64>(any));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace mvsa
