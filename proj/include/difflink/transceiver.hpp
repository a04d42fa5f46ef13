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

#ifndef DIFFLINK_TRANSCEIVER_HPP
#define DIFFLINK_TRANSCEIVER_HPP

#include "difflink/channel.hpp"
#include "difflink/core.hpp"
#include "difflink/diffraction.hpp"
#include "difflink/parallel.hpp"
#include "difflink/rng.hpp"

#include <algorithm>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace difflink
{

// ------------------------------------------------------------------------
// Modulator and detector

inline ComplexField modulate(std::size_t symbol, const ModulationScheme &s, const Geometry &g)
{
    if (symbol >= s.symbols())
        throw std::out_of_range("modulate: symbol " + std::to_string(symbol) + " outside [0, " +
                                std::to_string(s.symbols()) + ")");
    const auto [bx, bz] = s.block(symbol);
    const std::size_t sx = s.sub_x(g), sz = s.sub_z(g);
    const double amp = 1.0 / std::sqrt(static_cast<double>(sx * sz));
    ComplexField u(g);
    for (std::size_t iz = bz * sz; iz < (bz + 1) * sz; ++iz)
        for (std::size_t ix = bx * sx; ix < (bx + 1) * sx; ++ix)
            u(ix, iz) = amp;
    return u;
}

enum class DetectorNorm
{
    mean, // softmax(p / mean(p))
    none, // softmax(p)
};

inline std::string to_string(DetectorNorm n) { return n == DetectorNorm::mean ? "mean" : "none"; }

inline DetectorNorm detector_norm_from_string(const std::string &s)
{
    if (s == "mean")
        return DetectorNorm::mean;
    if (s == "none")
        return DetectorNorm::none;
    throw ConfigError("detector.normalization", "unknown normalization '" + s + "' (expected mean or none)");
}

struct DetectionResult
{
    std::vector<double> powers;
    std::vector<double> probabilities;
    std::size_t decision = 0;
};

inline std::vector<double> softmax(const std::vector<double> &z)
{
    std::vector<double> p(z.size());
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        sum += (p[i] = std::exp(z[i] - mx));
    for (auto &x : p)
        x /= sum;
    return p;
}

/// Argmax with ties resolved to the lowest index.
inline std::size_t argmax(const std::vector<double> &v)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best])
            best = i;
    return best;
}

/// Detector input mean(p); zero means the normalized logits are all zero.
inline double power_mean(const std::vector<double> &p)
{
    double s = 0.0;
    for (double x : p)
        s += x;
    return s / static_cast<double>(p.size());
}

inline std::vector<double> subarray_powers(std::span<const cplx> v, const ModulationScheme &s, const Geometry &g)
{
    std::vector<double> p(s.symbols(), 0.0);
    for (std::size_t iz = 0; iz < g.n_z; ++iz)
        for (std::size_t ix = 0; ix < g.n_x; ++ix)
            p[s.symbol_at(ix, iz, g)] += std::norm(v[iz * g.n_x + ix]);
    return p;
}

inline DetectionResult detect(const ComplexField &v, const ModulationScheme &s, const Geometry &g,
                              DetectorNorm norm = DetectorNorm::mean)
{
    if (!v.matches(g))
        throw std::invalid_argument("detect: field does not match geometry");
    DetectionResult r;
    r.powers = subarray_powers(v.values(), s, g);
    std::vector<double> z = r.powers;
    if (norm == DetectorNorm::mean)
    {
        const double mu = power_mean(r.powers);
        for (auto &x : z)
            x = mu > 0.0 ? x / mu : 0.0;
    }
    r.probabilities = softmax(z);
    r.decision = argmax(r.powers);
    return r;
}

// ------------------------------------------------------------------------
// Scale-only batch normalization

enum class BnMode
{
    train,
    eval,
};

struct BnResult
{
    double scale = 1.0;      // divisor applied
    bool degenerate = false; // zero batch energy, left unchanged
};

/// Train mode divides every field by the batch RMS magnitude; eval mode is the identity.
inline BnResult batch_norm(std::vector<ComplexField> &batch, BnMode mode)
{
    if (batch.empty())
        throw std::invalid_argument("batch_norm: empty batch");
    if (mode == BnMode::eval)
        return {};
    double e = 0.0;
    std::size_t count = 0;
    for (const auto &f : batch)
    {
        e += field_power(f);
        count += f.size();
    }
    const double s = std::sqrt(e / static_cast<double>(count));
    if (!(s > 0.0))
        return {1.0, true};
    const double inv = 1.0 / s;
    for (auto &f : batch)
        f *= inv;
    return {s, false};
}

// ------------------------------------------------------------------------
// Transceiver

/// Modulator, TX stack, RX stack and detector sharing one aperture grid.
struct Transceiver
{
    Geometry geometry;
    ModulationScheme scheme;
    LayerStack tx;
    LayerStack rx;
    std::shared_ptr<const Propagator> propagator;
    DetectorNorm norm = DetectorNorm::mean;
    /// Mean per-element received signal power used to set noise levels; 0 until calibrated.
    double reference_power = 0.0;

    Transceiver() = default;

    Transceiver(const Geometry &g, const ModulationScheme &s, Engine engine = Engine::asm_fft, double padding = 2.0,
                DetectorNorm n = DetectorNorm::mean)
        : geometry(g), scheme(s), tx(make_stack(g.l_tx, g.n_x, g.n_z)), rx(make_stack(g.l_rx, g.n_x, g.n_z)),
          norm(n)
    {
        g.validate();
        s.validate(g);
        propagator = std::make_shared<const Propagator>(engine, g, padding);
    }

    std::size_t cells() const noexcept { return geometry.cells(); }
    std::size_t symbols() const noexcept { return scheme.symbols(); }

    void validate() const
    {
        geometry.validate();
        scheme.validate(geometry);
        if (!propagator || !(propagator->geometry() == geometry))
            throw std::invalid_argument("Transceiver: propagator does not match geometry");
        if (tx.size() != geometry.l_tx || rx.size() != geometry.l_rx)
            throw std::invalid_argument("Transceiver: layer count does not match geometry");
        for (const auto *stack : {&tx, &rx})
            for (const auto &l : *stack)
                if (l.n_x != geometry.n_x || l.n_z != geometry.n_z || l.size() != geometry.cells())
                    throw std::invalid_argument("Transceiver: layer grid does not match geometry");
    }
};

/// TX aperture output u_L for one modulated field (no normalization).
inline ComplexField transmit(const Transceiver &t, std::size_t symbol)
{
    return cascade(modulate(symbol, t.scheme, t.geometry), t.tx, *t.propagator, Direction::tx);
}

/// Intermediate fields of a batched forward pass, kept for the backward pass.
/// Layer k (0-based) is layer k + 1: nearest the modulator on TX, nearest the detector on RX.
struct BatchTrace
{
    std::vector<std::size_t> symbols;
    std::vector<const ChannelRealization *> channels;
    BnMode bn = BnMode::eval;

    std::vector<std::vector<ComplexField>> tx_phase; // [k][i] phi_k * P(u_{k-1})
    std::vector<std::vector<ComplexField>> tx_out;   // [k][i] u_k
    std::vector<double> tx_scale;

    std::vector<std::vector<ComplexField>> rx_in;   // [k][i] v_{k+1}
    std::vector<std::vector<ComplexField>> rx_prop; // [k][i] P(psi_k * v_{k+1})
    std::vector<std::vector<ComplexField>> rx_out;  // [k][i] v_k
    std::vector<double> rx_scale;

    std::vector<DetectionResult> detections;
    std::size_t bn_degenerate = 0; // batch-norm layers skipped for zero energy

    std::size_t size() const noexcept { return symbols.size(); }
    const ComplexField &detector_field(std::size_t i) const { return rx_out.front()[i]; }
};

struct BatchInput
{
    std::vector<std::size_t> symbols;
    std::vector<const ChannelRealization *> channels; // one per sample
    std::vector<std::uint64_t> noise_seeds;           // one per sample; same seeds reproduce the same noise
};

/// Runs modulate -> TX stack -> channel + noise -> RX stack -> detect for a batch.
/// Batch normalization (train mode) couples samples through the per-layer batch RMS.
inline BatchTrace forward_batch(const Transceiver &t, const BatchInput &in, BnMode bn = BnMode::eval)
{
    const std::size_t b = in.symbols.size();
    if (b == 0)
        throw std::invalid_argument("forward_batch: empty batch");
    if (in.channels.size() != b || in.noise_seeds.size() != b)
        throw std::invalid_argument("forward_batch: channels and noise seeds must match the batch size");
    const Geometry &g = t.geometry;
    const Propagator &prop = *t.propagator;
    const std::size_t n = g.cells();
    const std::size_t ltx = t.tx.size(), lrx = t.rx.size();
    if (ltx == 0 || lrx == 0)
        throw std::invalid_argument("forward_batch: empty layer stack");

    BatchTrace tr;
    tr.symbols = in.symbols;
    tr.channels = in.channels;
    tr.bn = bn;
    tr.tx_phase.assign(ltx, std::vector<ComplexField>(b, ComplexField(g)));
    tr.tx_scale.assign(ltx, 1.0);
    tr.rx_in.assign(lrx, std::vector<ComplexField>(b, ComplexField(g)));
    tr.rx_prop.assign(lrx, std::vector<ComplexField>(b, ComplexField(g)));
    tr.rx_scale.assign(lrx, 1.0);

    std::vector<ComplexField> cur(b);
    parallel_for(b, [&](std::size_t i) { cur[i] = modulate(in.symbols[i], t.scheme, g); });

    for (std::size_t k = 0; k < ltx; ++k)
    {
        const auto coeff = t.tx[k].coefficients();
        parallel_for(b, [&](std::size_t i) {
            auto &out = tr.tx_phase[k][i];
            prop.apply(cur[i].values(), out.values());
            for (std::size_t j = 0; j < n; ++j)
                out[j] *= coeff[j];
        });
        cur = tr.tx_phase[k];
        const BnResult r = batch_norm(cur, bn);
        tr.tx_scale[k] = r.scale;
        tr.bn_degenerate += r.degenerate;
        tr.tx_out.push_back(cur);
    }

    parallel_for(b, [&](std::size_t i) {
        const ChannelRealization &ch = *in.channels[i];
        ComplexField v(g);
        channel_multiply(ch, cur[i].values(), v.values());
        if (ch.sigma2 > 0.0)
        {
            std::mt19937_64 eng(in.noise_seeds[i]);
            add_noise(v.values(), ch.sigma2, eng);
        }
        cur[i] = std::move(v);
    });

    tr.rx_out.assign(lrx, {});
    for (std::size_t k = lrx; k-- > 0;)
    {
        tr.rx_in[k] = cur;
        const auto coeff = t.rx[k].coefficients();
        parallel_for(b, [&](std::size_t i) {
            thread_local std::vector<cplx> c;
            c.resize(n);
            for (std::size_t j = 0; j < n; ++j)
                c[j] = cur[i][j] * coeff[j];
            prop.apply(c, tr.rx_prop[k][i].values());
        });
        cur = tr.rx_prop[k];
        const BnResult r = batch_norm(cur, bn);
        tr.rx_scale[k] = r.scale;
        tr.bn_degenerate += r.degenerate;
        tr.rx_out[k] = cur;
    }

    tr.detections.resize(b);
    parallel_for(b, [&](std::size_t i) { tr.detections[i] = detect(cur[i], t.scheme, g, t.norm); });
    return tr;
}

struct ForwardResult
{
    DetectionResult detection;
    /// Field planes in pipeline order: modulator, u_1..u_L, v_L..v_1, v_0. Empty unless retained.
    std::vector<ComplexField> planes;
};

/// Single-symbol inference (no batch normalization).
inline ForwardResult forward(const Transceiver &t, std::size_t symbol, const ChannelRealization &ch,
                             std::mt19937_64 &noise, bool retain = false)
{
    ForwardResult r;
    ComplexField u0 = modulate(symbol, t.scheme, t.geometry);
    if (retain)
        r.planes.push_back(u0);
    const ComplexField u = cascade(u0, t.tx, *t.propagator, Direction::tx, retain ? &r.planes : nullptr);
    const ComplexField v = apply_channel(u, ch, noise);
    if (retain)
        r.planes.push_back(v);
    std::vector<ComplexField> rx_planes;
    const ComplexField out = cascade(v, t.rx, *t.propagator, Direction::rx, retain ? &rx_planes : nullptr);
    // rx_planes holds v_{L-1}..v_0; v_L was pushed above
    for (auto &p : rx_planes)
        r.planes.push_back(std::move(p));
    r.detection = detect(out, t.scheme, t.geometry, t.norm);
    return r;
}

inline ForwardResult forward(const Transceiver &t, std::size_t symbol, const ChannelRealization &ch,
                             const RngSeed &seed, std::uint64_t draw = 0, bool retain = false)
{
    auto eng = seed.engine(Stream::noise, draw);
    return forward(t, symbol, ch, eng, retain);
}

// ------------------------------------------------------------------------
// Field dumps

using MagnitudeGrid = std::vector<double>; // flat-index order

inline std::vector<MagnitudeGrid> dump_fields(const std::vector<ComplexField> &planes)
{
    if (planes.empty())
        throw std::invalid_argument("dump_fields: no retained planes (run forward with retention on)");
    std::vector<MagnitudeGrid> out;
    out.reserve(planes.size());
    for (const auto &p : planes)
    {
        MagnitudeGrid m(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
            m[i] = std::abs(p[i]);
        out.push_back(std::move(m));
    }
    return out;
}

/// Binary 8-bit graymap, width n_x, height n_z, scaled so the maximum maps to 255.
inline void write_pgm(std::ostream &os, const MagnitudeGrid &m, std::size_t n_x, std::size_t n_z)
{
    if (m.size() != n_x * n_z)
        throw std::invalid_argument("write_pgm: grid size mismatch");
    const double mx = m.empty() ? 0.0 : *std::max_element(m.begin(), m.end());
    os << "P5\n" << n_x << ' ' << n_z << "\n255\n";
    for (double x : m)
    {
        const double s = mx > 0.0 ? x / mx * 255.0 : 0.0;
        os.put(static_cast<char>(static_cast<unsigned char>(std::clamp(std::lround(s), 0L, 255L))));
    }
}

/// One CSV line per z row, n_x values per line.
inline void write_grid_csv(std::ostream &os, const MagnitudeGrid &m, std::size_t n_x, std::size_t n_z)
{
    if (m.size() != n_x * n_z)
        throw std::invalid_argument("write_grid_csv: grid size mismatch");
    os.precision(17);
    for (std::size_t iz = 0; iz < n_z; ++iz)
    {
        for (std::size_t ix = 0; ix < n_x; ++ix)
            os << (ix ? "," : "") << m[iz * n_x + ix];
        os << '\n';
    }
}

// ------------------------------------------------------------------------
// Noise calibration

/// Mean per-element signal power at the RX aperture, |H u_L|^2 / N, averaged over a batch of
/// uniformly drawn symbols. A fixed channel uses draw 0; otherwise draws
/// 0..channel_draws-1 are cycled over the batch.
inline double measure_reference_power(const Transceiver &t, const ChannelModel &cm, const RngSeed &seed,
                                      std::size_t batch = 512, std::size_t channel_draws = 32)
{
    if (batch == 0)
        throw std::invalid_argument("measure_reference_power: empty calibration batch");
    auto eng = seed.engine(Stream::calibration);
    std::uniform_int_distribution<std::size_t> pick(0, t.symbols() - 1);
    std::vector<std::size_t> symbols(batch);
    for (auto &s : symbols)
        s = pick(eng);

    std::vector<ComplexField> tx_out(t.symbols());
    for (std::size_t m = 0; m < t.symbols(); ++m)
        tx_out[m] = transmit(t, m);

    const bool fixed = cm.config().redraw == RedrawPolicy::fixed || cm.config().kind == ChannelKind::identity;
    std::vector<ChannelRealization> channels(fixed ? 1 : std::min(batch, channel_draws));
    parallel_for(channels.size(), [&](std::size_t c) { channels[c] = cm.draw(seed, c); });
    std::vector<double> power(batch);
    parallel_for(batch, [&](std::size_t i) {
        ComplexField v(t.geometry);
        channel_multiply(channels[i % channels.size()], tx_out[symbols[i]].values(), v.values());
        power[i] = field_power(v) / static_cast<double>(t.cells());
    });
    double sum = 0.0;
    for (double p : power)
        sum += p;
    const double pbar = sum / static_cast<double>(batch);
    if (!(pbar > 0.0) || !std::isfinite(pbar))
        throw std::runtime_error("noise calibration: received signal power is zero");
    return pbar;
}

inline double noise_variance(double reference_power, double snr_db)
{
    if (!(reference_power > 0.0))
        throw std::runtime_error("noise calibration: reference power not set");
    return reference_power / db_to_linear(snr_db);
}

/// sigma^2 = P / 10^(SNR/10) with P measured on the current pipeline.
inline double calibrate_noise(double snr_db, const Transceiver &t, const ChannelModel &cm, const RngSeed &seed,
                              std::size_t batch = 512)
{
    return noise_variance(measure_reference_power(t, cm, seed, batch), snr_db);
}

} // namespace difflink

#endif
