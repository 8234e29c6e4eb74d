#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace calsens {

// Standard normal helpers (Boost.Math underneath).
double normal_pdf(double z);
double normal_cdf(double z);
double normal_quantile(double p);

/// z_c: the (1-c) quantile of N(0,1).
double upper_z(double c);

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Child seed for stream `stream` under `base`. Independent of call order,
/// so replicate r always sees the same stream whatever the scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// xoshiro256** seeded through SplitMix64. Normals are drawn by inverting
/// the normal CDF at a 53-bit uniform, so streams are identical on every
/// platform with IEEE doubles.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double normal();
    bool bernoulli(double p) noexcept { return uniform() < p; }
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
};

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace calsens
