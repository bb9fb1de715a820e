#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace trackdiff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// All recoverable failures in the library surface as this type. The message
/// is the short, stable error phrase (e.g. "invalid state"); callers that need
/// context append it after a colon.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer, used to derive independent stream seeds from a
/// master seed and an index.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t index) { return Rng(mix_seed(seed, index)); }

/// Standard normal draw. Box-Muller on the raw engine output so that draws are
/// identical across standard library implementations.
inline double standard_normal(Rng& rng)
{
    constexpr double two_pi = 6.283185307179586476925286766559;
    constexpr double scale = 1.0 / 9007199254740992.0; // 2^-53
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * scale;
    const double u2 = static_cast<double>(rng() >> 11) * scale;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

/// Uniform draw in [0, 1).
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return i < n ? i : n - 1;
}

/// Fisher-Yates shuffle driven by uniform_index, reproducible across platforms.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

inline Vec standard_normal_vec(Eigen::Index n, Rng& rng)
{
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = standard_normal(rng);
    return v;
}

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

} // namespace trackdiff
