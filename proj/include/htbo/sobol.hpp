#ifndef HTBO_SOBOL_HPP
#define HTBO_SOBOL_HPP

#include "htbo/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace htbo {

namespace detail {

// Primitive polynomials and initial direction numbers (Joe & Kuo,
// new-joe-kuo-6.21201) for dimensions 2..21. Dimension 1 is van der Corput.
struct SobolPoly {
  unsigned degree;
  std::uint32_t coeffs;
  std::array<std::uint32_t, 8> m;
};

inline constexpr std::array<SobolPoly, 20> sobol_polys{{
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
    {6, 22, {1, 3, 1, 15, 13, 25}},
    {6, 25, {1, 1, 5, 5, 19, 61}},
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},
}};

inline constexpr unsigned sobol_bits = 32;

}  // namespace detail

/// Gray-code Sobol generator. The origin is skipped, so the first point is
/// (1/2, ..., 1/2). With a seed, every point is XOR-ed with a random digital
/// shift drawn from that seed.
class SobolSequence {
public:
  static constexpr Index max_dim = detail::sobol_polys.size() + 1;

  explicit SobolSequence(Index dim, std::optional<std::uint64_t> scramble_seed = std::nullopt)
      : dim_(dim), direction_(dim), state_(dim, 0), shift_(dim, 0) {
    if (dim < 1 || dim > max_dim) throw Error("sobol: dimension must be in [1, " + std::to_string(max_dim) + "]");
    using detail::sobol_bits;
    for (unsigned i = 0; i < sobol_bits; ++i) direction_[0][i] = std::uint32_t(1) << (sobol_bits - 1 - i);
    for (Index j = 1; j < dim; ++j) {
      const auto& p = detail::sobol_polys[j - 1];
      std::array<std::uint64_t, sobol_bits> m{};
      for (unsigned i = 0; i < p.degree; ++i) m[i] = p.m[i];
      for (unsigned i = p.degree; i < sobol_bits; ++i) {
        std::uint64_t v = m[i - p.degree] ^ (m[i - p.degree] << p.degree);
        for (unsigned k = 1; k < p.degree; ++k)
          if ((p.coeffs >> (p.degree - 1 - k)) & 1u) v ^= m[i - k] << k;
        m[i] = v;
      }
      for (unsigned i = 0; i < sobol_bits; ++i) direction_[j][i] = std::uint32_t(m[i] << (sobol_bits - 1 - i));
    }
    if (scramble_seed) {
      std::mt19937_64 rng(*scramble_seed);
      for (auto& s : shift_) s = std::uint32_t(rng() >> 32);
    }
  }

  Index dim() const { return dim_; }

  /// Next point in [0,1)^d.
  Vector next() {
    unsigned c = 0;
    for (std::uint64_t n = index_; n & 1u; n >>= 1) ++c;
    ++index_;
    Vector u{Eigen::Index(dim_)};
    for (Index j = 0; j < dim_; ++j) {
      state_[j] ^= direction_[j][c];
      u[Eigen::Index(j)] = double(state_[j] ^ shift_[j]) / 4294967296.0;
    }
    return u;
  }

private:
  Index dim_;
  std::vector<std::array<std::uint32_t, detail::sobol_bits>> direction_;
  std::vector<std::uint32_t> state_;
  std::vector<std::uint32_t> shift_;
  std::uint64_t index_ = 0;
};

/// First `count` (optionally scrambled) Sobol points mapped into `bounds`.
inline std::vector<Vector> sobol_candidates(const Bounds& bounds, Index count,
                                            std::optional<std::uint64_t> seed = std::nullopt) {
  if (count < 1) throw Error("sobol_candidates: count must be positive");
  SobolSequence seq(bounds.dim(), seed);
  std::vector<Vector> out;
  out.reserve(count);
  for (Index i = 0; i < count; ++i) out.push_back(bounds.from_unit(seq.next()));
  return out;
}

}  // namespace htbo

#endif  // HTBO_SOBOL_HPP
