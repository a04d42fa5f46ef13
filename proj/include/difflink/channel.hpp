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

#ifndef DIFFLINK_CHANNEL_HPP
#define DIFFLINK_CHANNEL_HPP

#include "difflink/core.hpp"
#include "difflink/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <sstream>
#include <string>

namespace difflink
{

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double x) { return 10.0 * std::log10(x); }

/// Normalized sinc, sin(pi x) / (pi x).
inline double sinc(double x)
{
    if (std::abs(x) < 1e-12)
        return 1.0;
    return std::sin(pi * x) / (pi * x);
}

enum class ArraySide
{
    tx,
    rx,
};

/// Planar array response. Entry at cell (ix, iz) is exp(j (ix w_x + iz w_z)) with
/// w_x = 2 pi d_x / lambda sin(ele) cos(azi) and w_z = 2 pi d_z / lambda cos(ele).
/// In flat-index order this is the z response Kronecker the x response.
inline Eigen::VectorXcd steering_vector(const Geometry &g, double elevation, double azimuth,
                                        ArraySide side = ArraySide::tx)
{
    (void)side; // both apertures share one grid
    const double wx = 2.0 * pi * g.d_x / g.wavelength * std::sin(elevation) * std::cos(azimuth);
    const double wz = 2.0 * pi * g.d_z / g.wavelength * std::cos(elevation);
    Eigen::VectorXcd a(static_cast<Eigen::Index>(g.cells()));
    for (std::size_t iz = 0; iz < g.n_z; ++iz)
        for (std::size_t ix = 0; ix < g.n_x; ++ix)
            a(static_cast<Eigen::Index>(flat_index(ix, iz, g))) =
                std::polar(1.0, static_cast<double>(ix) * wx + static_cast<double>(iz) * wz);
    return a;
}

struct RicianConfig
{
    double k_factor = 1.0; // linear
    double tx_elevation = pi / 2.0;
    double tx_azimuth = pi / 2.0;
    double rx_elevation = pi / 2.0;
    double rx_azimuth = pi / 2.0;

    void validate() const
    {
        if (!(k_factor >= 0.0) || !std::isfinite(k_factor))
            throw ConfigError("channel.k_factor_db", "Rician factor must be finite and >= 0 (linear)");
    }

    bool operator==(const RicianConfig &) const = default;
};

/// a_TX a_RX^H.
inline Eigen::MatrixXcd los_channel(const Geometry &g, const RicianConfig &c)
{
    const Eigen::VectorXcd at = steering_vector(g, c.tx_elevation, c.tx_azimuth, ArraySide::tx);
    const Eigen::VectorXcd ar = steering_vector(g, c.rx_elevation, c.rx_azimuth, ArraySide::rx);
    return at * ar.adjoint();
}

/// Spatial correlation sinc(2 r / lambda) between aperture elements.
inline Eigen::MatrixXd correlation_matrix(const Geometry &g)
{
    const std::size_t n = g.cells();
    Eigen::MatrixXd r(n, n);
    for (std::size_t a = 0; a < n; ++a)
    {
        const auto [ax, az] = grid_coords(a, g);
        for (std::size_t b = 0; b < n; ++b)
        {
            const auto [bx, bz] = grid_coords(b, g);
            const double dx = (static_cast<double>(ax) - static_cast<double>(bx)) * g.d_x;
            const double dz = (static_cast<double>(az) - static_cast<double>(bz)) * g.d_z;
            r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                sinc(2.0 * std::sqrt(dx * dx + dz * dz) / g.wavelength);
        }
    }
    return r;
}

/// Symmetric square root with negative eigenvalues clipped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd &r)
{
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("psd_sqrt: eigendecomposition failed");
    const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd out = es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
    if (out.cwiseAbs().maxCoeff() == 0.0)
        throw std::runtime_error("psd_sqrt: correlation matrix has no positive eigenvalue");
    return out;
}

inline Eigen::MatrixXcd complex_gaussian_matrix(std::mt19937_64 &eng, Eigen::Index rows, Eigen::Index cols)
{
    Eigen::MatrixXcd g(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i)
            g(i, j) = complex_normal(eng, 1.0);
    return g;
}

/// Scales m so that its squared Frobenius norm is exactly target (to rounding).
inline void normalize_frobenius(Eigen::MatrixXcd &m, double target_norm)
{
    const double f = m.norm();
    if (!(f > 0.0))
        throw std::runtime_error("channel: cannot normalize an all-zero matrix");
    m *= target_norm / f;
}

/// alpha R_rx^{1/2} G R_tx^{1/2} with ||.||_F = N, given precomputed square roots.
inline Eigen::MatrixXcd nlos_channel(const Eigen::MatrixXd &sqrt_rx, const Eigen::MatrixXd &sqrt_tx,
                                     std::mt19937_64 &eng)
{
    const Eigen::Index n = sqrt_rx.rows();
    const Eigen::MatrixXcd g = complex_gaussian_matrix(eng, n, n);
    Eigen::MatrixXcd h = sqrt_rx.cast<cplx>() * g * sqrt_tx.cast<cplx>();
    normalize_frobenius(h, static_cast<double>(n));
    return h;
}

inline Eigen::MatrixXcd nlos_channel(const Geometry &g, const RngSeed &seed, std::uint64_t draw = 0)
{
    const Eigen::MatrixXd s = psd_sqrt(correlation_matrix(g));
    auto eng = seed.engine(Stream::channel, draw);
    return nlos_channel(s, s, eng);
}

enum class ChannelKind
{
    rician,
    rank_constrained,
    identity,
};

inline std::string to_string(ChannelKind k)
{
    switch (k)
    {
    case ChannelKind::rician:
        return "rician";
    case ChannelKind::rank_constrained:
        return "rank";
    case ChannelKind::identity:
        return "identity";
    }
    return "?";
}

inline ChannelKind channel_kind_from_string(const std::string &s)
{
    if (s == "rician")
        return ChannelKind::rician;
    if (s == "rank" || s == "rank-constrained")
        return ChannelKind::rank_constrained;
    if (s == "identity")
        return ChannelKind::identity;
    throw ConfigError("channel.kind", "unknown channel kind '" + s + "' (expected rician, rank or identity)");
}

struct ChannelRealization
{
    Eigen::MatrixXcd h;
    double sigma2 = 0.0;
    ChannelKind provenance = ChannelKind::identity;

    std::size_t size() const noexcept { return static_cast<std::size_t>(h.rows()); }
    bool all_finite() const { return h.allFinite() && std::isfinite(sigma2); }
};

inline ChannelRealization identity_channel(std::size_t n, double sigma2 = 0.0)
{
    const auto k = static_cast<Eigen::Index>(n);
    return {Eigen::MatrixXcd::Identity(k, k), sigma2, ChannelKind::identity};
}

inline ChannelRealization rician_channel(const Geometry &g, const RicianConfig &c, const Eigen::MatrixXcd &nlos)
{
    c.validate();
    const double wl = std::sqrt(c.k_factor / (1.0 + c.k_factor));
    const double wn = std::sqrt(1.0 / (1.0 + c.k_factor));
    ChannelRealization out;
    out.h = wn * nlos;
    if (wl > 0.0)
        out.h += wl * los_channel(g, c);
    out.provenance = ChannelKind::rician;
    return out;
}

inline ChannelRealization rician_channel(const Geometry &g, const RicianConfig &c, const RngSeed &seed,
                                         std::uint64_t draw = 0)
{
    return rician_channel(g, c, nlos_channel(g, seed, draw));
}

/// (N / ||U V||_F) U V with U (N x R), V (R x N) i.i.d. complex Gaussian.
inline ChannelRealization rank_constrained_channel(std::size_t n, std::size_t rank, std::mt19937_64 &eng)
{
    if (rank < 1 || rank > n)
        throw ConfigError("channel.rank", "rank must lie in [1, " + std::to_string(n) + "], got " +
                                              std::to_string(rank));
    const auto k = static_cast<Eigen::Index>(n), r = static_cast<Eigen::Index>(rank);
    const Eigen::MatrixXcd u = complex_gaussian_matrix(eng, k, r);
    const Eigen::MatrixXcd v = complex_gaussian_matrix(eng, r, k);
    ChannelRealization out;
    out.h = u * v;
    normalize_frobenius(out.h, static_cast<double>(n));
    out.provenance = ChannelKind::rank_constrained;
    return out;
}

inline ChannelRealization rank_constrained_channel(const Geometry &g, std::size_t rank, const RngSeed &seed,
                                                   std::uint64_t draw = 0)
{
    auto eng = seed.engine(Stream::channel, draw);
    return rank_constrained_channel(g.cells(), rank, eng);
}

/// How often a fresh channel is drawn.
enum class RedrawPolicy
{
    fixed,      // one realization per run
    per_batch,  // block fading per mini-batch
    per_sample, // independent draw per symbol
};

inline std::string to_string(RedrawPolicy p)
{
    switch (p)
    {
    case RedrawPolicy::fixed:
        return "fixed";
    case RedrawPolicy::per_batch:
        return "per_batch";
    case RedrawPolicy::per_sample:
        return "per_sample";
    }
    return "?";
}

inline RedrawPolicy redraw_policy_from_string(const std::string &s)
{
    if (s == "fixed")
        return RedrawPolicy::fixed;
    if (s == "per_batch")
        return RedrawPolicy::per_batch;
    if (s == "per_sample")
        return RedrawPolicy::per_sample;
    throw ConfigError("channel.redraw", "unknown redraw policy '" + s + "' (expected fixed, per_batch or per_sample)");
}

struct ChannelConfig
{
    ChannelKind kind = ChannelKind::rician;
    RicianConfig rician;
    std::size_t rank = 16;
    RedrawPolicy redraw = RedrawPolicy::fixed;

    void validate(const Geometry &g) const
    {
        if (kind == ChannelKind::rician)
            rician.validate();
        if (kind == ChannelKind::rank_constrained && (rank < 1 || rank > g.cells()))
            throw ConfigError("channel.rank", "rank must lie in [1, N]");
    }

    bool operator==(const ChannelConfig &) const = default;
};

/// Draws channel realizations for one geometry. The correlation square root is
/// computed once; draws are pure functions of (seed, draw index).
class ChannelModel
{
public:
    ChannelModel(const Geometry &g, ChannelConfig cfg) : g_(g), cfg_(std::move(cfg))
    {
        cfg_.validate(g);
        if (cfg_.kind == ChannelKind::rician)
            sqrt_r_ = std::make_shared<const Eigen::MatrixXd>(psd_sqrt(correlation_matrix(g)));
    }

    const ChannelConfig &config() const noexcept { return cfg_; }
    const Geometry &geometry() const noexcept { return g_; }

    ChannelRealization draw(const RngSeed &seed, std::uint64_t index) const
    {
        switch (cfg_.kind)
        {
        case ChannelKind::identity:
            return identity_channel(g_.cells());
        case ChannelKind::rank_constrained:
        {
            auto eng = seed.engine(Stream::channel, index);
            return rank_constrained_channel(g_.cells(), cfg_.rank, eng);
        }
        case ChannelKind::rician:
        {
            auto eng = seed.engine(Stream::channel, index);
            return rician_channel(g_, cfg_.rician, nlos_channel(*sqrt_r_, *sqrt_r_, eng));
        }
        }
        throw std::logic_error("ChannelModel: unknown kind");
    }

    /// Draw index for sample `sample` of batch `batch` under the redraw policy.
    std::uint64_t draw_index(std::uint64_t batch, std::uint64_t sample_global) const noexcept
    {
        switch (cfg_.redraw)
        {
        case RedrawPolicy::fixed:
            return 0;
        case RedrawPolicy::per_batch:
            return batch;
        case RedrawPolicy::per_sample:
            return sample_global;
        }
        return 0;
    }

private:
    Geometry g_;
    ChannelConfig cfg_;
    std::shared_ptr<const Eigen::MatrixXd> sqrt_r_;
};

/// v = H u without noise.
inline void channel_multiply(const ChannelRealization &ch, std::span<const cplx> u, std::span<cplx> v)
{
    const auto n = static_cast<Eigen::Index>(u.size());
    if (ch.h.rows() != n || ch.h.cols() != n || v.size() != u.size())
        throw std::invalid_argument("apply_channel: field length does not match channel dimension");
    Eigen::Map<const Eigen::VectorXcd> x(u.data(), n);
    Eigen::Map<Eigen::VectorXcd> y(v.data(), n);
    y.noalias() = ch.h * x;
}

/// v = H^H g.
inline void channel_adjoint(const ChannelRealization &ch, std::span<const cplx> g, std::span<cplx> out)
{
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::Map<const Eigen::VectorXcd> x(g.data(), n);
    Eigen::Map<Eigen::VectorXcd> y(out.data(), n);
    y.noalias() = ch.h.adjoint() * x;
}

inline void add_noise(std::span<cplx> v, double sigma2, std::mt19937_64 &eng)
{
    if (sigma2 <= 0.0)
        return;
    for (auto &x : v)
        x += complex_normal(eng, sigma2);
}

/// H u + n with n ~ CN(0, sigma2 I).
inline ComplexField apply_channel(const ComplexField &u, const ChannelRealization &ch, std::mt19937_64 &eng)
{
    ComplexField v(u.n_x(), u.n_z());
    channel_multiply(ch, u.values(), v.values());
    add_noise(v.values(), ch.sigma2, eng);
    return v;
}

inline ComplexField apply_channel(const ComplexField &u, const ChannelRealization &ch, const RngSeed &seed,
                                  std::uint64_t draw = 0)
{
    auto eng = seed.engine(Stream::noise, draw);
    return apply_channel(u, ch, eng);
}

// ------------------------------------------------------------------------
// Matrix dumps

/// CSV: header re_0,im_0,...; one line per matrix row.
inline void write_channel_csv(std::ostream &os, const Eigen::MatrixXcd &h)
{
    for (Eigen::Index j = 0; j < h.cols(); ++j)
        os << (j ? "," : "") << "re_" << j << ",im_" << j;
    os << '\n';
    os.precision(17);
    for (Eigen::Index i = 0; i < h.rows(); ++i)
    {
        for (Eigen::Index j = 0; j < h.cols(); ++j)
            os << (j ? "," : "") << h(i, j).real() << ',' << h(i, j).imag();
        os << '\n';
    }
}

inline Eigen::MatrixXcd read_channel_csv(std::istream &is)
{
    std::string line;
    if (!std::getline(is, line))
        throw std::runtime_error("channel csv: empty input");
    const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
    if (cols % 2 != 0)
        throw std::runtime_error("channel csv: odd column count");
    std::vector<std::vector<cplx>> rows;
    while (std::getline(is, line))
    {
        if (line.empty())
            continue;
        std::vector<cplx> row;
        std::stringstream ss(line);
        std::string a, b;
        while (std::getline(ss, a, ',') && std::getline(ss, b, ','))
            row.emplace_back(std::stod(a), std::stod(b));
        if (static_cast<Eigen::Index>(row.size()) != cols / 2)
            throw std::runtime_error("channel csv: ragged row " + std::to_string(rows.size()));
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXcd h(static_cast<Eigen::Index>(rows.size()), cols / 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return h;
}

namespace detail
{
template <class T>
void put_le(std::ostream &os, T v)
{
    static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
    os.write(reinterpret_cast<const char *>(&v), sizeof(T));
}

template <class T>
T get_le(std::istream &is)
{
    T v{};
    if (!is.read(reinterpret_cast<char *>(&v), sizeof(T)))
        throw std::runtime_error("unexpected end of binary stream");
    return v;
}
} // namespace detail

inline constexpr char channel_magic[8] = {'D', 'F', 'L', 'K', 'C', 'H', 'A', 'N'};

/// Binary: magic, u64 rows, u64 cols, f64 sigma2, u32 kind, then (re, im) f64 pairs row-major.
inline void write_channel_binary(std::ostream &os, const ChannelRealization &ch)
{
    os.write(channel_magic, 8);
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(ch.h.rows()));
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(ch.h.cols()));
    detail::put_le<double>(os, ch.sigma2);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ch.provenance));
    for (Eigen::Index i = 0; i < ch.h.rows(); ++i)
        for (Eigen::Index j = 0; j < ch.h.cols(); ++j)
        {
            detail::put_le<double>(os, ch.h(i, j).real());
            detail::put_le<double>(os, ch.h(i, j).imag());
        }
}

inline ChannelRealization read_channel_binary(std::istream &is)
{
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, channel_magic, 8) != 0)
        throw std::runtime_error("channel binary: bad magic");
    const auto rows = detail::get_le<std::uint64_t>(is);
    const auto cols = detail::get_le<std::uint64_t>(is);
    if (rows > (1u << 16) || cols > (1u << 16))
        throw std::runtime_error("channel binary: implausible dimensions");
    ChannelRealization ch;
    ch.sigma2 = detail::get_le<double>(is);
    const auto kind = detail::get_le<std::uint32_t>(is);
    if (kind > 2)
        throw std::runtime_error("channel binary: unknown provenance");
    ch.provenance = static_cast<ChannelKind>(kind);
    ch.h.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < ch.h.rows(); ++i)
        for (Eigen::Index j = 0; j < ch.h.cols(); ++j)
        {
            const double re = detail::get_le<double>(is);
            const double im = detail::get_le<double>(is);
            ch.h(i, j) = {re, im};
        }
    return ch;
}

} // namespace difflink

#endif
