// Flat binary container of named tensors.
//
// Layout (all integers little-endian):
//   magic "LETC" | u32 version | u32 entry count
//   per entry: u32 name length | name bytes | u8 dtype tag | u32 ndim |
//              u64 dims[ndim] | row-major payload (f32 or f64, little-endian)
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "letr/tensor.hpp"

namespace letr {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerEntry {
  std::string name;
  DType dtype = DType::F64;
  Shape shape;
  std::vector<Scalar> values;
};

std::vector<std::uint8_t> encode_container(const std::vector<ContainerEntry>& entries);
std::vector<ContainerEntry> decode_container(const std::vector<std::uint8_t>& bytes);

void write_container(const std::filesystem::path& path, const std::vector<ContainerEntry>& entries);
std::vector<ContainerEntry> read_container(const std::filesystem::path& path);

namespace bytes {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
void put_f64(std::vector<std::uint8_t>& out, double v);

/// Bounds-checked little-endian reader; throws FormatError on truncation.
class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& data) : data_(data) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str(std::size_t n);
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  const std::vector<std::uint8_t>& data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data);

}  // namespace bytes

}  // namespace letr
