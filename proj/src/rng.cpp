#include "exactmeta/rng.hpp"

#include <cmath>

namespace exactmeta {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(prod >> 32);
  lo = static_cast<std::uint32_t>(prod);
}

std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> ctr,
                                          std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

}  // namespace

std::uint32_t Philox::next_u32() {
  if (buf_pos_ == 4) {
    buf_ = philox_block({static_cast<std::uint32_t>(block_),
                         static_cast<std::uint32_t>(block_ >> 32), hi_[0],
                         hi_[1]},
                        key_);
    ++block_;
    buf_pos_ = 0;
  }
  return buf_[buf_pos_++];
}

double Philox::uniform() {
  return (next_u32() + 0.5) * 0x1.0p-32;
}

double Philox::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

int Philox::uniform_int(int lo, int hi) {
  int span = hi - lo + 1;
  int v = static_cast<int>(uniform() * span);
  if (v >= span) v = span - 1;
  return lo + v;
}

void Philox::fill_normal(std::span<double> out) {
  for (double& x : out) x = normal();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

DrawMatrix normal_draws(std::uint64_t seed, int rows, int cols) {
  DrawMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data.resize(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    Philox gen(seed, static_cast<std::uint64_t>(r));
    gen.fill_normal({m.data.data() + static_cast<std::size_t>(r) * cols,
                     static_cast<std::size_t>(cols)});
  }
  return m;
}

}  // namespace exactmeta
