#include "letr/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

namespace letr {

namespace bytes {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void Reader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw FormatError("truncated data");
}

std::uint8_t Reader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
  return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str(std::size_t n) {
  need(n);
  std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace bytes

namespace {
constexpr char kMagic[4] = {'L', 'E', 'T', 'C'};
}

std::vector<std::uint8_t> encode_container(const std::vector<ContainerEntry>& entries) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  bytes::put_u32(out, kContainerVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    const std::size_t n = std::accumulate(e.shape.begin(), e.shape.end(), std::size_t{1}, std::multiplies<>());
    if (n != e.values.size()) throw FormatError("entry '" + e.name + "' shape does not match payload");
    bytes::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    bytes::put_u8(out, static_cast<std::uint8_t>(e.dtype));
    bytes::put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) bytes::put_u64(out, d);
    for (Scalar v : e.values) {
      if (e.dtype == DType::F32) {
        bytes::put_f32(out, static_cast<float>(v));
      } else {
        bytes::put_f64(out, v);
      }
    }
  }
  return out;
}

std::vector<ContainerEntry> decode_container(const std::vector<std::uint8_t>& data) {
  bytes::Reader in(data);
  if (in.str(4) != std::string(kMagic, 4)) throw FormatError("not a tensor container (bad magic)");
  const auto version = in.u32();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto count = in.u32();
  std::vector<ContainerEntry> entries;
  for (std::uint32_t k = 0; k < count; ++k) {
    ContainerEntry e;
    e.name = in.str(in.u32());
    const auto tag = in.u8();
    if (tag != 1 && tag != 2) throw FormatError("entry '" + e.name + "' has unknown dtype tag");
    e.dtype = static_cast<DType>(tag);
    const auto ndim = in.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.shape.push_back(static_cast<std::size_t>(in.u64()));
      n *= e.shape.back();
    }
    e.values.resize(n);
    for (auto& v : e.values) v = e.dtype == DType::F32 ? static_cast<Scalar>(in.f32()) : in.f64();
    entries.push_back(std::move(e));
  }
  if (!in.done()) throw FormatError("trailing bytes after container entries");
  return entries;
}

void write_container(const std::filesystem::path& path, const std::vector<ContainerEntry>& entries) {
  bytes::write_file(path, encode_container(entries));
}

std::vector<ContainerEntry> read_container(const std::filesystem::path& path) {
  return decode_container(bytes::read_file(path));
}

}  // namespace letr
