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

#ifndef DIFFLINK_DIFFRACTION_HPP
#define DIFFLINK_DIFFRACTION_HPP

#include "difflink/core.hpp"
#include "difflink/fft.hpp"

#include <Eigen/Dense>

#include <cstdlib>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace difflink
{

// ------------------------------------------------------------------------
// Rayleigh-Sommerfeld point-sampled kernel

/// Coupling from a source element to a receiving element displaced by (offset_x, offset_z)
/// cells on a plane `distance` away:
///   A d / r^2 * (1 / (2 pi r) + 1 / (j lambda)) * exp(j 2 pi r / lambda),
///   r = sqrt(d^2 + (offset_x d_x)^2 + (offset_z d_z)^2).
inline cplx rsf_coefficient(long offset_x, long offset_z, const Geometry &g, double distance)
{
    const double ox = static_cast<double>(offset_x) * g.d_x;
    const double oz = static_cast<double>(offset_z) * g.d_z;
    const double r2 = distance * distance + ox * ox + oz * oz;
    const double r = std::sqrt(r2);
    const cplx near_far = cplx(1.0 / (2.0 * pi * r), -1.0 / g.wavelength); // 1/(j lambda) = -j/lambda
    return g.element_area() * distance / r2 * near_far * std::polar(1.0, 2.0 * pi * r / g.wavelength);
}

inline cplx rsf_coefficient(long offset_x, long offset_z, const Geometry &g)
{
    return rsf_coefficient(offset_x, offset_z, g, g.d_layer);
}

/// Kernel values for every offset that occurs on the grid, plus the dense coupling matrix.
/// The matrix depends only on cell offsets (block Toeplitz) and is symmetric.
class RsfKernel
{
public:
    RsfKernel(const Geometry &g, double distance) : g_(g), distance_(distance)
    {
        if (!(distance > 0.0))
            throw std::invalid_argument("RsfKernel: distance must be > 0");
        const long nx = static_cast<long>(g.n_x), nz = static_cast<long>(g.n_z);
        table_.resize(static_cast<std::size_t>((2 * nx - 1) * (2 * nz - 1)));
        for (long oz = -(nz - 1); oz <= nz - 1; ++oz)
            for (long ox = -(nx - 1); ox <= nx - 1; ++ox)
                table_[slot(ox, oz)] = rsf_coefficient(ox, oz, g, distance);
    }

    const Geometry &geometry() const noexcept { return g_; }
    double distance() const noexcept { return distance_; }

    cplx operator()(long offset_x, long offset_z) const { return table_[slot(offset_x, offset_z)]; }

    /// w[dst, src] for flat indices.
    cplx coupling(std::size_t dst, std::size_t src) const
    {
        const auto [dx, dz] = grid_coords(dst, g_);
        const auto [sx, sz] = grid_coords(src, g_);
        return (*this)(static_cast<long>(dx) - static_cast<long>(sx), static_cast<long>(dz) - static_cast<long>(sz));
    }

    Eigen::MatrixXcd dense() const
    {
        const std::size_t n = g_.cells();
        Eigen::MatrixXcd w(n, n);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t d = 0; d < n; ++d)
                w(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(s)) = coupling(d, s);
        return w;
    }

private:
    std::size_t slot(long ox, long oz) const
    {
        const long nx = static_cast<long>(g_.n_x), nz = static_cast<long>(g_.n_z);
        if (std::labs(ox) >= nx || std::labs(oz) >= nz)
            throw std::out_of_range("RsfKernel: offset outside grid");
        return static_cast<std::size_t>((oz + nz - 1) * (2 * nx - 1) + (ox + nx - 1));
    }

    Geometry g_;
    double distance_;
    std::vector<cplx> table_;
};

/// Direct O(N^2) summation dst[m] = sum_n w[m, n] src[n] over one layer spacing.
inline ComplexField propagate_rsf(const ComplexField &src, const Geometry &g, double distance)
{
    if (!src.matches(g))
        throw std::invalid_argument("propagate_rsf: field is " + std::to_string(src.n_x()) + "x" +
                                    std::to_string(src.n_z()) + ", geometry is " + std::to_string(g.n_x) + "x" +
                                    std::to_string(g.n_z));
    const RsfKernel kernel(g, distance);
    ComplexField dst(g);
    for (std::size_t dz = 0; dz < g.n_z; ++dz)
        for (std::size_t dx = 0; dx < g.n_x; ++dx)
        {
            cplx acc = 0.0;
            for (std::size_t sz = 0; sz < g.n_z; ++sz)
                for (std::size_t sx = 0; sx < g.n_x; ++sx)
                    acc += kernel(static_cast<long>(dx) - static_cast<long>(sx),
                                  static_cast<long>(dz) - static_cast<long>(sz)) *
                           src[sz * g.n_x + sx];
            dst[dz * g.n_x + dx] = acc;
        }
    return dst;
}

inline ComplexField propagate_rsf(const ComplexField &src, const Geometry &g)
{
    return propagate_rsf(src, g, g.d_layer);
}

// ------------------------------------------------------------------------
// Angular spectrum transfer function

/// Padded grid size ceil(padding * n).
inline std::size_t padded_size(std::size_t n, double padding)
{
    if (!(padding >= 1.0))
        throw ConfigError("propagation.padding", "padding factor must be >= 1");
    return static_cast<std::size_t>(std::ceil(padding * static_cast<double>(n) - 1e-9));
}

/// Signed DFT frequency index of bin k on a length-p axis: {-p/2 .. p/2 - 1} for even p.
inline long signed_bin(std::size_t k, std::size_t p) noexcept
{
    return k < (p + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(p);
}

/// Bin of signed frequency index s on a length-p axis.
inline std::size_t bin_of(long s, std::size_t p) noexcept
{
    return s >= 0 ? static_cast<std::size_t>(s) : static_cast<std::size_t>(s + static_cast<long>(p));
}

/// Sampled transfer function of free space over `distance` on a zero-padded p_x x p_z
/// frequency grid. Samples are stored in DFT bin order, row-major with rows along z.
struct AsmTransfer
{
    std::size_t n_x = 0, n_z = 0; // aperture
    std::size_t p_x = 0, p_z = 0; // padded grid
    double d_x = 0.0, d_z = 0.0;
    double wavelength = 0.0;
    double distance = 0.0;
    std::vector<cplx> samples;
    std::vector<std::uint8_t> propagating;

    std::size_t slot(std::size_t kx, std::size_t kz) const noexcept { return kz * p_x + kx; }

    double freq_x(long s) const noexcept { return static_cast<double>(s) / (static_cast<double>(p_x) * d_x); }
    double freq_z(long s) const noexcept { return static_cast<double>(s) / (static_cast<double>(p_z) * d_z); }

    /// Sample at signed frequency indices (sx, sz).
    cplx at(long sx, long sz) const { return samples[slot(bin_of(sx, p_x), bin_of(sz, p_z))]; }
    bool is_propagating(long sx, long sz) const { return propagating[slot(bin_of(sx, p_x), bin_of(sz, p_z))] != 0; }
};

/// Samples within this distance of the light cone, (lambda f)^2 = 1, count as propagating.
inline constexpr double light_cone_tolerance = 1e-12;

inline AsmTransfer build_asm_transfer(const Geometry &g, double distance, double padding)
{
    if (!(distance > 0.0))
        throw std::invalid_argument("build_asm_transfer: distance must be > 0");
    AsmTransfer t;
    t.n_x = g.n_x;
    t.n_z = g.n_z;
    t.p_x = padded_size(g.n_x, padding);
    t.p_z = padded_size(g.n_z, padding);
    t.d_x = g.d_x;
    t.d_z = g.d_z;
    t.wavelength = g.wavelength;
    t.distance = distance;
    t.samples.resize(t.p_x * t.p_z);
    t.propagating.resize(t.p_x * t.p_z);

    const double k = g.wavenumber();
    for (std::size_t kz = 0; kz < t.p_z; ++kz)
    {
        const double lz = g.wavelength * t.freq_z(signed_bin(kz, t.p_z));
        for (std::size_t kx = 0; kx < t.p_x; ++kx)
        {
            const double lx = g.wavelength * t.freq_x(signed_bin(kx, t.p_x));
            const double a = 1.0 - lx * lx - lz * lz;
            const std::size_t i = t.slot(kx, kz);
            if (a >= -light_cone_tolerance)
            {
                t.samples[i] = std::polar(1.0, k * std::sqrt(std::max(a, 0.0)) * distance);
                t.propagating[i] = 1;
            }
            else
            {
                // evanescent: k_y = j * gamma, gamma = k * sqrt((lambda f)^2 - 1)
                const double gamma = k * std::sqrt(-a);
                t.samples[i] = std::exp(-gamma * distance);
                t.propagating[i] = 0;
            }
        }
    }
    return t;
}

inline AsmTransfer build_asm_transfer(const Geometry &g, double padding = 2.0)
{
    return build_asm_transfer(g, g.d_layer, padding);
}

/// One row of the passband plot: signed frequency bin along x (f_z = 0) and |h|.
struct PassbandSample
{
    long index;
    double magnitude;
};

/// Transfer magnitude along the f_z = 0 axis, in ascending signed-bin order.
inline std::vector<PassbandSample> spectrum_passband_plot(const AsmTransfer &t)
{
    std::vector<PassbandSample> out;
    out.reserve(t.p_x);
    const long lo = -static_cast<long>(t.p_x / 2);
    const long hi = static_cast<long>((t.p_x + 1) / 2) - 1;
    for (long s = lo; s <= hi; ++s)
        out.push_back({s, std::abs(t.at(s, 0))});
    return out;
}

inline void write_passband_csv(std::ostream &os, const std::vector<PassbandSample> &rows)
{
    os << "index,magnitude\n";
    os.precision(17);
    for (const auto &r : rows)
        os << r.index << ',' << r.magnitude << '\n';
}

// ------------------------------------------------------------------------
// Propagators

enum class Engine
{
    asm_fft,
    rsf_dense,
};

inline std::string to_string(Engine e) { return e == Engine::asm_fft ? "asm" : "rsf"; }

inline Engine engine_from_string(const std::string &s)
{
    if (s == "asm" || s == "asm-fft")
        return Engine::asm_fft;
    if (s == "rsf" || s == "rsf-dense")
        return Engine::rsf_dense;
    throw ConfigError("propagation.engine", "unknown engine '" + s + "' (expected asm or rsf)");
}

/// Layer-to-layer free-space propagation over a fixed distance. Immutable after
/// construction; apply() may be called concurrently from several threads.
class Propagator
{
public:
    Propagator(Engine engine, const Geometry &g, double distance, double padding)
        : engine_(engine), g_(g), distance_(distance), padding_(padding)
    {
        g.validate();
        if (engine == Engine::asm_fft)
            impl_ = std::make_shared<const AsmImpl>(build_asm_transfer(g, distance, padding));
        else
            impl_ = std::make_shared<const DenseImpl>(RsfKernel(g, distance).dense());
    }

    Propagator(Engine engine, const Geometry &g, double padding = 2.0) : Propagator(engine, g, g.d_layer, padding) {}

    Engine engine() const noexcept { return engine_; }
    const Geometry &geometry() const noexcept { return g_; }
    double distance() const noexcept { return distance_; }
    double padding() const noexcept { return padding_; }
    std::size_t cells() const noexcept { return g_.cells(); }

    void apply(std::span<const cplx> in, std::span<cplx> out) const { run(in, out, false); }
    /// Conjugate-transpose of apply().
    void apply_adjoint(std::span<const cplx> in, std::span<cplx> out) const { run(in, out, true); }

    ComplexField operator()(const ComplexField &src) const
    {
        check(src);
        ComplexField dst(g_);
        apply(src.values(), dst.values());
        return dst;
    }

    ComplexField adjoint(const ComplexField &src) const
    {
        check(src);
        ComplexField dst(g_);
        apply_adjoint(src.values(), dst.values());
        return dst;
    }

    /// Dense matrix of the operator, built by applying it to unit vectors.
    Eigen::MatrixXcd matrix() const
    {
        const std::size_t n = g_.cells();
        Eigen::MatrixXcd m(n, n);
        std::vector<cplx> e(n, 0.0), col(n);
        for (std::size_t j = 0; j < n; ++j)
        {
            e[j] = 1.0;
            apply(e, col);
            for (std::size_t i = 0; i < n; ++i)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
            e[j] = 0.0;
        }
        return m;
    }

    /// Null for the dense engine.
    const AsmTransfer *transfer() const noexcept
    {
        if (const auto *a = dynamic_cast<const AsmImpl *>(impl_.get()))
            return &a->transfer;
        return nullptr;
    }

private:
    struct Impl
    {
        virtual ~Impl() = default;
        virtual void run(std::span<const cplx> in, std::span<cplx> out, bool adjoint) const = 0;
    };

    struct AsmImpl final : Impl
    {
        explicit AsmImpl(AsmTransfer t) : transfer(std::move(t)), fft(transfer.p_z, transfer.p_x)
        {
            const double scale = 1.0 / static_cast<double>(transfer.p_x * transfer.p_z);
            forward_gain.resize(transfer.samples.size());
            adjoint_gain.resize(transfer.samples.size());
            for (std::size_t i = 0; i < transfer.samples.size(); ++i)
            {
                forward_gain[i] = transfer.samples[i] * scale;
                adjoint_gain[i] = std::conj(transfer.samples[i]) * scale;
            }
        }

        void run(std::span<const cplx> in, std::span<cplx> out, bool adjoint) const override
        {
            thread_local std::vector<cplx> pad;
            const std::size_t px = transfer.p_x, nx = transfer.n_x, nz = transfer.n_z;
            pad.assign(fft.size(), cplx(0.0));
            for (std::size_t iz = 0; iz < nz; ++iz)
                for (std::size_t ix = 0; ix < nx; ++ix)
                    pad[iz * px + ix] = in[iz * nx + ix];
            fft.forward(pad.data());
            const auto &gain = adjoint ? adjoint_gain : forward_gain;
            for (std::size_t i = 0; i < pad.size(); ++i)
                pad[i] *= gain[i];
            fft.inverse(pad.data());
            for (std::size_t iz = 0; iz < nz; ++iz)
                for (std::size_t ix = 0; ix < nx; ++ix)
                    out[iz * nx + ix] = pad[iz * px + ix];
        }

        AsmTransfer transfer;
        Fft2d fft;
        std::vector<cplx> forward_gain;
        std::vector<cplx> adjoint_gain;
    };

    struct DenseImpl final : Impl
    {
        explicit DenseImpl(Eigen::MatrixXcd m) : w(std::move(m)) {}

        void run(std::span<const cplx> in, std::span<cplx> out, bool adjoint) const override
        {
            const auto n = static_cast<Eigen::Index>(in.size());
            Eigen::Map<const Eigen::VectorXcd> x(in.data(), n);
            Eigen::Map<Eigen::VectorXcd> y(out.data(), n);
            if (adjoint)
                y.noalias() = w.adjoint() * x;
            else
                y.noalias() = w * x;
        }

        Eigen::MatrixXcd w;
    };

    void run(std::span<const cplx> in, std::span<cplx> out, bool adjoint) const
    {
        if (in.size() != g_.cells() || out.size() != g_.cells())
            throw std::invalid_argument("Propagator: buffer size does not match geometry");
        if (in.data() == out.data())
            throw std::invalid_argument("Propagator: input and output must not alias");
        impl_->run(in, out, adjoint);
    }

    void check(const ComplexField &f) const
    {
        if (!f.matches(g_))
            throw std::invalid_argument("Propagator: field shape does not match propagator geometry");
    }

    Engine engine_;
    Geometry g_;
    double distance_;
    double padding_;
    std::shared_ptr<const Impl> impl_;
};

/// Free-function form: embed, transform, filter, inverse transform, crop.
inline ComplexField propagate_asm(const ComplexField &src, const AsmTransfer &t)
{
    if (src.n_x() != t.n_x || src.n_z() != t.n_z)
        throw std::invalid_argument("propagate_asm: field does not fit the transfer grid");
    const Fft2d fft(t.p_z, t.p_x);
    std::vector<cplx> pad(fft.size(), cplx(0.0));
    for (std::size_t iz = 0; iz < t.n_z; ++iz)
        for (std::size_t ix = 0; ix < t.n_x; ++ix)
            pad[iz * t.p_x + ix] = src[iz * t.n_x + ix];
    fft.forward(pad.data());
    const double scale = 1.0 / static_cast<double>(fft.size());
    for (std::size_t i = 0; i < pad.size(); ++i)
        pad[i] *= t.samples[i] * scale;
    fft.inverse(pad.data());
    ComplexField dst(t.n_x, t.n_z);
    for (std::size_t iz = 0; iz < t.n_z; ++iz)
        for (std::size_t ix = 0; ix < t.n_x; ++ix)
            dst[iz * t.n_x + ix] = pad[iz * t.p_x + ix];
    return dst;
}

// ------------------------------------------------------------------------
// Layer cascades

enum class Direction
{
    tx, // per hop: propagate, then phase
    rx, // per hop: phase, then propagate
};

/// Runs a diffractive stack. TX applies layers 1..L as u_l = phi_l * P(u_{l-1}); RX
/// applies layers L..1 as v_{l-1} = P(psi_l * v_l). When `planes` is non-null the field
/// after every hop is appended to it.
inline ComplexField cascade(const ComplexField &src, const LayerStack &layers, const Propagator &prop, Direction dir,
                            std::vector<ComplexField> *planes = nullptr)
{
    const Geometry &g = prop.geometry();
    if (!src.matches(g))
        throw std::invalid_argument("cascade: input field does not match propagator geometry");
    for (const auto &layer : layers)
        if (layer.n_x != g.n_x || layer.n_z != g.n_z)
            throw std::invalid_argument("cascade: layer grid does not match propagator geometry");

    ComplexField cur = src;
    ComplexField tmp(g);
    const std::size_t n = g.cells();
    if (dir == Direction::tx)
    {
        for (const auto &layer : layers)
        {
            prop.apply(cur.values(), tmp.values());
            for (std::size_t i = 0; i < n; ++i)
                cur[i] = tmp[i] * layer.coefficient(i);
            if (planes)
                planes->push_back(cur);
        }
    }
    else
    {
        for (std::size_t l = layers.size(); l-- > 0;)
        {
            for (std::size_t i = 0; i < n; ++i)
                tmp[i] = cur[i] * layers[l].coefficient(i);
            prop.apply(tmp.values(), cur.values());
            if (planes)
                planes->push_back(cur);
        }
    }
    return cur;
}

} // namespace difflink

#endif
