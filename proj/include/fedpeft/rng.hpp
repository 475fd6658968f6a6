// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace fedpeft {

// Counter-based splitmix64 stream. A (seed, stream) pair fully determines the
// draw sequence on every platform; child streams with distinct ids are
// statistically independent of the parent.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    /// New generator over the same seed with a different stream id.
    Rng child(std::uint64_t stream) const { return Rng(seed_, stream); }

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal (Box-Muller, no cached spare).
    double normal();
    /// Gamma(shape, 1) via Marsaglia-Tsang.
    double gamma(double shape);

    template <typename Seq>
    void shuffle(Seq& seq) {
        for (std::size_t i = seq.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(seq[i - 1], seq[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t state_;
};

// Reserved stream ids; every consumer draws from its own stream so that
// partitioning, initialization, dropout, and shuffling never interleave.
namespace streams {
inline constexpr std::uint64_t init = 0x10;
inline constexpr std::uint64_t split = 0x20;
inline constexpr std::uint64_t partition = 0x30;
inline constexpr std::uint64_t synth = 0x40;
inline constexpr std::uint64_t dropout = 0x50;
inline constexpr std::uint64_t node_shuffle = 0x1000; // + node id
inline constexpr std::uint64_t node_dropout = 0x2000; // + node id
} // namespace streams

} // namespace fedpeft
