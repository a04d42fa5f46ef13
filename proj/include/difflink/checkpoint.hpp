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

#ifndef DIFFLINK_CHECKPOINT_HPP
#define DIFFLINK_CHECKPOINT_HPP

#include "difflink/channel.hpp"
#include "difflink/transceiver.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

// Checkpoint layout, all little-endian:
//   char[8]  "DFLKCKPT"
//   u32      version (1)
//   u32      n_x, n_z, m_x, m_z, l_tx, l_rx, detector normalization (0 mean, 1 none),
//            engine (0 asm, 1 rsf)
//   f64      d_x, d_z, d_layer, wavelength, padding, reference_power
//   f64      phases: TX layers 1..L then RX layers 1..L, each n_z * n_x in flat-index order
//   u64      FNV-1a hash of every preceding byte

namespace difflink
{

inline constexpr char checkpoint_magic[8] = {'D', 'F', 'L', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t checkpoint_version = 1;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : bytes)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class CheckpointError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline std::string serialize_checkpoint(const Transceiver &t)
{
    t.validate();
    std::ostringstream os(std::ios::binary);
    os.write(checkpoint_magic, 8);
    using detail::put_le;
    put_le<std::uint32_t>(os, checkpoint_version);
    for (std::size_t v : {t.geometry.n_x, t.geometry.n_z, t.scheme.m_x, t.scheme.m_z, t.geometry.l_tx, t.geometry.l_rx})
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    put_le<std::uint32_t>(os, t.norm == DetectorNorm::mean ? 0u : 1u);
    put_le<std::uint32_t>(os, t.propagator->engine() == Engine::asm_fft ? 0u : 1u);
    for (double v : {t.geometry.d_x, t.geometry.d_z, t.geometry.d_layer, t.geometry.wavelength,
                     t.propagator->padding(), t.reference_power})
        put_le<double>(os, v);
    for (const auto *stack : {&t.tx, &t.rx})
        for (const auto &l : *stack)
            for (double p : l.phases)
                put_le<double>(os, p);
    std::string body = os.str();
    const std::uint64_t h = fnv1a(body);
    std::ostringstream tail(std::ios::binary);
    put_le<std::uint64_t>(tail, h);
    return body + tail.str();
}

/// Parses a checkpoint. `engine_override` replaces the stored engine when set.
inline Transceiver deserialize_checkpoint(const std::string &bytes, const Engine *engine_override = nullptr)
{
    if (bytes.size() < 8 + 4 + 8)
        throw CheckpointError("checkpoint: file too short");
    if (std::memcmp(bytes.data(), checkpoint_magic, 8) != 0)
        throw CheckpointError("checkpoint: bad magic");
    const std::string_view body(bytes.data(), bytes.size() - 8);
    std::istringstream tail(bytes.substr(bytes.size() - 8), std::ios::binary);
    if (detail::get_le<std::uint64_t>(tail) != fnv1a(body))
        throw CheckpointError("checkpoint: checksum mismatch");

    std::istringstream is(std::string(body.substr(8)), std::ios::binary);
    using detail::get_le;
    try
    {
        if (get_le<std::uint32_t>(is) != checkpoint_version)
            throw CheckpointError("checkpoint: unsupported version");
        std::uint32_t u[8];
        for (auto &x : u)
            x = get_le<std::uint32_t>(is);
        double d[6];
        for (auto &x : d)
            x = get_le<double>(is);

        Geometry g;
        g.n_x = u[0];
        g.n_z = u[1];
        g.l_tx = u[4];
        g.l_rx = u[5];
        g.d_x = d[0];
        g.d_z = d[1];
        g.d_layer = d[2];
        g.wavelength = d[3];
        ModulationScheme s{u[2], u[3]};
        if (u[6] > 1 || u[7] > 1)
            throw CheckpointError("checkpoint: bad enum field");
        const Engine e = engine_override ? *engine_override : (u[7] == 0 ? Engine::asm_fft : Engine::rsf_dense);
        const std::size_t expected = (g.l_tx + g.l_rx) * g.n_x * g.n_z * sizeof(double);
        if (g.cells() > (1u << 20) || g.l_tx + g.l_rx > 1024 ||
            body.size() != 8 + 4 + 8 * 4 + 6 * 8 + expected)
            throw CheckpointError("checkpoint: size does not match header");
        Transceiver t(g, s, e, d[4], u[6] == 0 ? DetectorNorm::mean : DetectorNorm::none);
        t.reference_power = d[5];
        for (auto *stack : {&t.tx, &t.rx})
            for (auto &l : *stack)
                for (auto &p : l.phases)
                    p = get_le<double>(is);
        return t;
    }
    catch (const ConfigError &e)
    {
        throw CheckpointError(std::string("checkpoint: invalid header: ") + e.what());
    }
    catch (const std::runtime_error &e)
    {
        if (dynamic_cast<const CheckpointError *>(&e))
            throw;
        throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
}

inline Transceiver load_checkpoint(const std::string &path, const Engine *engine_override = nullptr)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw CheckpointError("checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize_checkpoint(ss.str(), engine_override);
}

} // namespace difflink

#endif
