#pragma once

#include <string>
#include <vector>

#include "teformer/nn.hpp"

// Binary checkpoint layout (little endian):
//   "TEFCKPT1"                         8-byte magic
//   u64 metadata length, bytes         free-form text (the run config JSON)
//   u64 tensor count
//   per tensor, sorted by name:
//     u64 name length, bytes
//     4 × i32 dims (n, c, h, w)
//     float32 × numel
// Identical parameters and metadata always give identical bytes.

namespace teformer {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string metadata;
  std::vector<NamedTensor> tensors;  // sorted by name
};

template <typename T>
Checkpoint snapshot(const nn::ParamStore<T>& store, const std::string& metadata);

/// Copies values into `store`. Every stored parameter must be present with
/// a matching shape and vice versa; throws DataError otherwise.
template <typename T>
void restore(nn::ParamStore<T>& store, const Checkpoint& ckpt);

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace teformer
