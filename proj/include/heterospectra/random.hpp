#pragma once

// Seed mixing and per-stream generators. A single 64-bit master seed fans out
// into independent substreams keyed by (tag, index), so replicate and row
// streams never depend on evaluation order.

#include "heterospectra/matlin.hpp"

#include <cstdint>
#include <random>

namespace heterospectra {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

enum class StreamTag : std::uint64_t {
  replicate = 0x7265706cULL,
  row = 0x726f77ULL,
  design = 0x64657369ULL,
  stiefel = 0x73746965ULL,
  direction = 0x64697265ULL,
  factor = 0x66616374ULL,
};

std::uint64_t substream(std::uint64_t seed, StreamTag tag, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double rademacher() { return (engine_() >> 63) != 0 ? 1.0 : -1.0; }

  Mat normal_matrix(Index rows, Index cols);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace heterospectra
