// SPDX-License-Identifier: Apache-2.0
//
// difflink: simulation and training of diffractive metasurface transceivers
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef DIFFLINK_RNG_HPP
#define DIFFLINK_RNG_HPP

#include "difflink/core.hpp"

#include <cstdint>
#include <random>

namespace difflink
{

/// Independent random streams derived from one experiment seed.
enum class Stream : std::uint64_t
{
    channel = 1,
    noise = 2,
    data = 3,
    init = 4,
    calibration = 5,
    evaluation = 6,
    baseline = 7,
    bench = 8,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Experiment seed. Engines are derived per (stream, a, b, c) so that draws do not depend
/// on evaluation order or thread count.
struct RngSeed
{
    std::uint64_t seed = 0;

    std::uint64_t derive(Stream s, std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0) const noexcept
    {
        std::uint64_t h = splitmix64(seed);
        h = splitmix64(h ^ static_cast<std::uint64_t>(s));
        h = splitmix64(h ^ a);
        h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
        h = splitmix64(h ^ (c + 0x8cb92ba72f3d8dd7ULL));
        return h;
    }

    std::mt19937_64 engine(Stream s, std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0) const
    {
        return std::mt19937_64(derive(s, a, b, c));
    }

    RngSeed child(std::uint64_t tag) const noexcept { return RngSeed{splitmix64(seed ^ splitmix64(tag + 1))}; }

    bool operator==(const RngSeed &) const = default;
};

/// Circularly-symmetric complex Gaussian sample with E|z|^2 = variance.
template <class Engine>
cplx complex_normal(Engine &eng, double variance = 1.0)
{
    std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
    const double re = nd(eng);
    const double im = nd(eng);
    return {re, im};
}

template <class Engine>
std::vector<cplx> complex_normal_vector(Engine &eng, std::size_t n, double variance = 1.0)
{
    std::vector<cplx> v(n);
    for (auto &x : v)
        x = complex_normal(eng, variance);
    return v;
}

} // namespace difflink

#endif
