#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace exactmeta {

// Philox4x32-10 counter-based generator (Salmon et al. 2011).  A (seed,
// stream) pair selects an independent substream, and every draw is a pure
// function of (seed, stream, counter), so replicates can be evaluated in any
// order or on any number of threads with identical results.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        hi_{static_cast<std::uint32_t>(stream),
            static_cast<std::uint32_t>(stream >> 32)} {}

  std::uint32_t next_u32();

  // Uniform on (0, 1).
  double uniform();

  // Standard normal via Box-Muller; pairs are cached.
  double normal();

  // Uniform integer in {lo, ..., hi}.
  int uniform_int(int lo, int hi);

  void fill_normal(std::span<double> out);

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> hi_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int buf_pos_ = 4;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

// Row-major matrix of standard-normal draws; row b comes from substream b.
struct DrawMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols,
            static_cast<std::size_t>(cols)};
  }
};

DrawMatrix normal_draws(std::uint64_t seed, int rows, int cols);

}  // namespace exactmeta
