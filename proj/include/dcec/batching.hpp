#ifndef DCEC_BATCHING_HPP
#define DCEC_BATCHING_HPP

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "dcec/tensor.hpp"

namespace dcec {

// Index batches for one epoch: a seeded shuffle of 0..n-1 cut into
// batch_size chunks (last one smaller). Deterministic in (seed, epoch).
inline std::vector<std::vector<Index>> epoch_batches(Index n, Index batch_size, bool shuffle,
                                                     std::uint64_t seed, long epoch) {
  if (n < 1) throw ShapeError("epoch_batches: empty dataset");
  if (batch_size < 1) throw ShapeError("epoch_batches: batch_size must be >= 1");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  if (shuffle) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(epoch) >> 32)};
    std::mt19937 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::vector<std::vector<Index>> batches;
  batches.reserve(static_cast<std::size_t>((n + batch_size - 1) / batch_size));
  for (Index start = 0; start < n; start += batch_size) {
    const Index stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

}  // namespace dcec

#endif  // DCEC_BATCHING_HPP
