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

#ifndef DIFFLINK_CORE_HPP
#define DIFFLINK_CORE_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace difflink
{

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

/// Raised when a configuration value violates a range or divisibility rule.
/// `field()` names the offending setting (dotted path for config files).
class ConfigError : public std::invalid_argument
{
public:
    ConfigError(std::string field, const std::string &what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

    const std::string &field() const noexcept { return field_; }

private:
    std::string field_;
};

// ------------------------------------------------------------------------
// Geometry

/// Shared uniform planar array layout of feed antennas, every metasurface layer and the
/// detector array. Lengths are in meters.
struct Geometry
{
    std::size_t n_x = 16;        // elements along x (columns)
    std::size_t n_z = 16;        // elements along z (rows)
    double d_x = 0.125 * 10.7e-3; // element pitch along x
    double d_z = 0.125 * 10.7e-3; // element pitch along z
    double d_layer = 1.0e-3;     // spacing between adjacent layers
    double wavelength = 10.7e-3; // 28 GHz carrier
    std::size_t l_tx = 4;
    std::size_t l_rx = 4;

    std::size_t cells() const noexcept { return n_x * n_z; }
    double element_area() const noexcept { return d_x * d_z; }
    double wavenumber() const noexcept { return 2.0 * pi / wavelength; }

    void validate() const
    {
        if (n_x < 1)
            throw ConfigError("geometry.n_x", "must be >= 1");
        if (n_z < 1)
            throw ConfigError("geometry.n_z", "must be >= 1");
        if (!(d_x > 0.0) || !std::isfinite(d_x))
            throw ConfigError("geometry.d_x", "element pitch must be > 0");
        if (!(d_z > 0.0) || !std::isfinite(d_z))
            throw ConfigError("geometry.d_z", "element pitch must be > 0");
        if (!(d_layer > 0.0) || !std::isfinite(d_layer))
            throw ConfigError("geometry.d_layer", "layer spacing must be > 0");
        if (!(wavelength > 0.0) || !std::isfinite(wavelength))
            throw ConfigError("geometry.wavelength", "must be > 0");
        if (l_tx < 1)
            throw ConfigError("geometry.l_tx", "at least one TX layer is required");
        if (l_rx < 1)
            throw ConfigError("geometry.l_rx", "at least one RX layer is required");
    }

    bool operator==(const Geometry &) const = default;
};

/// Flat index of grid cell (ix, iz): n = iz * n_x + ix.
inline std::size_t flat_index(std::size_t ix, std::size_t iz, std::size_t n_x, std::size_t n_z)
{
    if (ix >= n_x || iz >= n_z)
        throw std::out_of_range("flat_index: cell (" + std::to_string(ix) + ", " + std::to_string(iz) +
                                ") outside " + std::to_string(n_x) + "x" + std::to_string(n_z) + " grid");
    return iz * n_x + ix;
}

inline std::size_t flat_index(std::size_t ix, std::size_t iz, const Geometry &g)
{
    return flat_index(ix, iz, g.n_x, g.n_z);
}

/// Inverse of flat_index: returns (ix, iz).
inline std::pair<std::size_t, std::size_t> grid_coords(std::size_t n, std::size_t n_x, std::size_t n_z)
{
    if (n >= n_x * n_z)
        throw std::out_of_range("grid_coords: flat index " + std::to_string(n) + " outside grid");
    return {n % n_x, n / n_x};
}

inline std::pair<std::size_t, std::size_t> grid_coords(std::size_t n, const Geometry &g)
{
    return grid_coords(n, g.n_x, g.n_z);
}

// ------------------------------------------------------------------------
// Fields

/// Complex amplitudes on one n_x x n_z plane, stored in flat-index order.
class ComplexField
{
public:
    ComplexField() = default;
    ComplexField(std::size_t n_x, std::size_t n_z) : n_x_(n_x), n_z_(n_z), values_(n_x * n_z) {}
    explicit ComplexField(const Geometry &g) : ComplexField(g.n_x, g.n_z) {}
    ComplexField(std::size_t n_x, std::size_t n_z, std::vector<cplx> values)
        : n_x_(n_x), n_z_(n_z), values_(std::move(values))
    {
        if (values_.size() != n_x_ * n_z_)
            throw std::invalid_argument("ComplexField: value count does not match grid size");
    }

    std::size_t n_x() const noexcept { return n_x_; }
    std::size_t n_z() const noexcept { return n_z_; }
    std::size_t size() const noexcept { return values_.size(); }

    cplx &operator[](std::size_t n) { return values_[n]; }
    const cplx &operator[](std::size_t n) const { return values_[n]; }

    cplx &operator()(std::size_t ix, std::size_t iz) { return values_[flat_index(ix, iz, n_x_, n_z_)]; }
    const cplx &operator()(std::size_t ix, std::size_t iz) const { return values_[flat_index(ix, iz, n_x_, n_z_)]; }

    std::span<cplx> values() noexcept { return values_; }
    std::span<const cplx> values() const noexcept { return values_; }
    cplx *data() noexcept { return values_.data(); }
    const cplx *data() const noexcept { return values_.data(); }

    bool same_shape(const ComplexField &o) const noexcept { return n_x_ == o.n_x_ && n_z_ == o.n_z_; }
    bool matches(const Geometry &g) const noexcept { return n_x_ == g.n_x && n_z_ == g.n_z; }

    bool all_finite() const noexcept
    {
        for (const auto &v : values_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                return false;
        return true;
    }

    ComplexField &operator*=(cplx c)
    {
        for (auto &v : values_)
            v *= c;
        return *this;
    }
    ComplexField &operator+=(const ComplexField &o)
    {
        if (!same_shape(o))
            throw std::invalid_argument("ComplexField: shape mismatch in +=");
        for (std::size_t i = 0; i < values_.size(); ++i)
            values_[i] += o.values_[i];
        return *this;
    }

    bool operator==(const ComplexField &) const = default;

private:
    std::size_t n_x_ = 0;
    std::size_t n_z_ = 0;
    std::vector<cplx> values_;
};

inline ComplexField operator+(ComplexField a, const ComplexField &b) { return a += b; }
inline ComplexField operator*(cplx c, ComplexField a) { return a *= c; }

/// Sum of squared magnitudes.
inline double field_power(std::span<const cplx> f) noexcept
{
    double p = 0.0;
    for (const auto &v : f)
        p += std::norm(v);
    return p;
}

inline double field_power(const ComplexField &f) noexcept { return field_power(f.values()); }

/// Relative L2 distance ||a - b|| / ||b||.
inline double relative_l2(std::span<const cplx> a, std::span<const cplx> b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("relative_l2: size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

inline double relative_l2(const ComplexField &a, const ComplexField &b) { return relative_l2(a.values(), b.values()); }

// ------------------------------------------------------------------------
// Phase layers

/// Wrap an angle into (-pi, pi].
inline double wrap_phase(double a) noexcept
{
    double w = std::remainder(a, 2.0 * pi); // [-pi, pi]
    return w <= -pi ? w + 2.0 * pi : w;
}

/// Trainable phase profile of one metasurface layer. The transmission coefficient of
/// element n is exp(j * phase[n]), so it has unit modulus by construction.
struct PhaseLayer
{
    std::size_t n_x = 0;
    std::size_t n_z = 0;
    std::vector<double> phases;

    PhaseLayer() = default;
    PhaseLayer(std::size_t nx, std::size_t nz, double value = 0.0) : n_x(nx), n_z(nz), phases(nx * nz, value) {}

    std::size_t size() const noexcept { return phases.size(); }
    cplx coefficient(std::size_t n) const { return std::polar(1.0, phases[n]); }

    std::vector<cplx> coefficients() const
    {
        std::vector<cplx> c(phases.size());
        for (std::size_t n = 0; n < phases.size(); ++n)
            c[n] = std::polar(1.0, phases[n]);
        return c;
    }

    bool operator==(const PhaseLayer &) const = default;
};

/// Layers of one diffractive stack, index 0 being layer 1 (closest to the modulator on the
/// TX side, closest to the detector on the RX side).
using LayerStack = std::vector<PhaseLayer>;

inline LayerStack make_stack(std::size_t layers, std::size_t n_x, std::size_t n_z, double value = 0.0)
{
    return LayerStack(layers, PhaseLayer(n_x, n_z, value));
}

// ------------------------------------------------------------------------
// Modulation

/// Subarray on/off keying: M = m_x * m_z symbols, each mapped to one contiguous block of
/// (n_x / m_x) x (n_z / m_z) feed antennas. Symbol m (0-based) occupies block
/// (m mod m_x, m / m_x).
struct ModulationScheme
{
    std::size_t m_x = 4;
    std::size_t m_z = 4;

    std::size_t symbols() const noexcept { return m_x * m_z; }
    std::size_t bits() const noexcept
    {
        std::size_t p = 0;
        for (std::size_t m = symbols(); m > 1; m >>= 1)
            ++p;
        return p;
    }
    std::size_t sub_x(const Geometry &g) const noexcept { return g.n_x / m_x; }
    std::size_t sub_z(const Geometry &g) const noexcept { return g.n_z / m_z; }
    std::size_t sub_cells(const Geometry &g) const noexcept { return sub_x(g) * sub_z(g); }

    /// Block coordinates (bx, bz) of symbol m.
    std::pair<std::size_t, std::size_t> block(std::size_t m) const noexcept { return {m % m_x, m / m_x}; }

    /// Symbol owning grid cell (ix, iz).
    std::size_t symbol_at(std::size_t ix, std::size_t iz, const Geometry &g) const noexcept
    {
        return (iz / sub_z(g)) * m_x + ix / sub_x(g);
    }

    void validate(const Geometry &g) const
    {
        if (m_x < 1)
            throw ConfigError("modulation.m_x", "must be >= 1");
        if (m_z < 1)
            throw ConfigError("modulation.m_z", "must be >= 1");
        const std::size_t m = symbols();
        if (m < 2 || (m & (m - 1)) != 0)
            throw ConfigError("modulation", "M = m_x * m_z = " + std::to_string(m) + " is not a power of two >= 2");
        if (g.n_x % m_x != 0)
            throw ConfigError("modulation.m_x", "n_x = " + std::to_string(g.n_x) + " is not divisible by m_x = " +
                                                    std::to_string(m_x));
        if (g.n_z % m_z != 0)
            throw ConfigError("modulation.m_z", "n_z = " + std::to_string(g.n_z) + " is not divisible by m_z = " +
                                                    std::to_string(m_z));
    }

    bool operator==(const ModulationScheme &) const = default;
};

/// Per-cell owning symbol, flat-index order.
inline std::vector<std::size_t> subarray_map(const ModulationScheme &s, const Geometry &g)
{
    std::vector<std::size_t> map(g.cells());
    for (std::size_t iz = 0; iz < g.n_z; ++iz)
        for (std::size_t ix = 0; ix < g.n_x; ++ix)
            map[iz * g.n_x + ix] = s.symbol_at(ix, iz, g);
    return map;
}

/// Symbols plus their one-hot and subarray-mask encodings.
struct SymbolBatch
{
    std::vector<std::size_t> symbols;
    std::size_t alphabet = 16;

    std::size_t size() const noexcept { return symbols.size(); }

    /// One-hot vector q_s.
    std::vector<double> one_hot(std::size_t i) const
    {
        std::vector<double> q(alphabet, 0.0);
        q.at(symbols.at(i)) = 1.0;
        return q;
    }

    /// Block indicator Q_s (m_x x m_z, flat order bz * m_x + bx), whose vectorization is q_s.
    std::vector<double> block_indicator(std::size_t i, const ModulationScheme &s) const
    {
        std::vector<double> q(s.symbols(), 0.0);
        const auto [bx, bz] = s.block(symbols.at(i));
        q[bz * s.m_x + bx] = 1.0;
        return q;
    }

    /// Q_s expanded to the full grid: 1 on the active subarray, 0 elsewhere.
    std::vector<std::uint8_t> mask(std::size_t i, const ModulationScheme &s, const Geometry &g) const
    {
        std::vector<std::uint8_t> m(g.cells(), 0);
        const std::size_t sym = symbols.at(i);
        for (std::size_t n = 0; n < g.cells(); ++n)
        {
            const auto [ix, iz] = grid_coords(n, g);
            m[n] = s.symbol_at(ix, iz, g) == sym ? 1 : 0;
        }
        return m;
    }
};

} // namespace difflink

#endif
