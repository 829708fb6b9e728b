#pragma once

#include <torch/torch.h>

#include <iosfwd>
#include <string>

namespace egsnet {

// Raw little-endian tensor serialization: dtype id, rank, shape, payload.
// Values round-trip bit-exactly; layout is normalized to contiguous.
void write_tensor(std::ostream& os, const torch::Tensor& t);
torch::Tensor read_tensor(std::istream& is);

std::string sha256_hex(const std::string& bytes);

}  // namespace egsnet
