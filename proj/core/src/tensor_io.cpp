#include "egsnet/tensor_io.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "egsnet/errors.hpp"

namespace egsnet {

namespace {

constexpr uint32_t kTensorMagic = 0x454e5354;  // "TSNE" little-endian tag

uint32_t dtype_id(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kInt32: return 3;
    case torch::kUInt8: return 4;
    default: throw DataError("unsupported tensor dtype for serialization");
  }
}

torch::ScalarType dtype_from_id(uint32_t id) {
  switch (id) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kInt32;
    case 4: return torch::kUInt8;
    default: throw DataError("unknown tensor dtype id in stream");
  }
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated tensor stream");
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU).contiguous();
  write_pod(os, kTensorMagic);
  write_pod(os, dtype_id(c.scalar_type()));
  write_pod(os, static_cast<uint32_t>(c.dim()));
  for (int64_t i = 0; i < c.dim(); ++i) write_pod(os, static_cast<int64_t>(c.size(i)));
  const auto bytes = static_cast<std::streamsize>(c.numel() * c.element_size());
  os.write(static_cast<const char*>(c.data_ptr()), bytes);
  if (!os) throw DataError("failed writing tensor payload");
}

torch::Tensor read_tensor(std::istream& is) {
  if (read_pod<uint32_t>(is) != kTensorMagic) throw DataError("bad tensor magic in stream");
  const auto dtype = dtype_from_id(read_pod<uint32_t>(is));
  const auto rank = read_pod<uint32_t>(is);
  if (rank > 16) throw DataError("implausible tensor rank in stream");
  std::vector<int64_t> shape(rank);
  for (auto& s : shape) s = read_pod<int64_t>(is);
  auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
  const auto bytes = static_cast<std::streamsize>(t.numel() * t.element_size());
  is.read(static_cast<char*>(t.data_ptr()), bytes);
  if (!is) throw DataError("truncated tensor payload");
  return t;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace egsnet
