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

#ifndef DIFFLINK_BENCH_HPP
#define DIFFLINK_BENCH_HPP

#include "difflink/core.hpp"
#include "difflink/diffraction.hpp"
#include "difflink/rng.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>
#include <vector>

namespace difflink
{

struct BenchRecord
{
    std::size_t n = 0; // aperture side, N = n * n cells
    Engine engine = Engine::asm_fft;
    double median_ns = 0.0;
    double iqr_ns = 0.0;
    double setup_ns = 0.0;
    double padding = 0.0;
    std::size_t reps = 0;

    std::size_t cells() const noexcept { return n * n; }
};

struct BenchOptions
{
    double padding = 2.0;
    std::size_t reps = 30;
    std::size_t warmup = 3;
    /// ASM-vs-RSF relative L2 bound checked on every timed instance. The two discretizations
    /// differ by a geometry-dependent amount; 0.35 covers the default 1 mm spacing.
    double tolerance = 0.35;
    Geometry base; // pitch, spacing and wavelength; n_x and n_z are overridden
};

struct BenchResult
{
    std::vector<BenchRecord> records;
    std::vector<double> rel_error; // per size
    bool correct = true;
};

namespace detail
{
inline double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

template <class Fn>
BenchRecord time_engine(Fn &&fn, std::size_t reps, std::size_t warmup)
{
    using clock = std::chrono::steady_clock;
    for (std::size_t i = 0; i < warmup; ++i)
        fn();
    std::vector<double> t(reps);
    for (std::size_t i = 0; i < reps; ++i)
    {
        const auto a = clock::now();
        fn();
        t[i] = std::chrono::duration<double, std::nano>(clock::now() - a).count();
    }
    BenchRecord r;
    r.median_ns = quantile(t, 0.5);
    r.iqr_ns = quantile(t, 0.75) - quantile(t, 0.25);
    r.reps = reps;
    return r;
}
} // namespace detail

/// Times one propagation with each engine per aperture size on the same random field.
/// Setup (dense matrix or transfer function) is timed separately.
inline BenchResult bench_propagation(const std::vector<std::size_t> &sizes, const BenchOptions &opt,
                                     const RngSeed &seed)
{
    if (!std::is_sorted(sizes.begin(), sizes.end()))
        throw std::invalid_argument("bench_propagation: sizes must be ascending");
    if (opt.reps < 1)
        throw ConfigError("bench.reps", "must be >= 1");
    using clock = std::chrono::steady_clock;
    BenchResult res;
    for (std::size_t n : sizes)
    {
        Geometry g = opt.base;
        g.n_x = g.n_z = n;
        g.validate();
        auto eng = seed.engine(Stream::bench, n);
        ComplexField src(g);
        for (std::size_t i = 0; i < src.size(); ++i)
            src[i] = complex_normal(eng);
        ComplexField out_asm(g), out_rsf(g);

        auto t0 = clock::now();
        const Propagator pa(Engine::asm_fft, g, opt.padding);
        const double setup_asm = std::chrono::duration<double, std::nano>(clock::now() - t0).count();
        BenchRecord ra = detail::time_engine([&] { pa.apply(src.values(), out_asm.values()); }, opt.reps, opt.warmup);
        ra.n = n;
        ra.engine = Engine::asm_fft;
        ra.setup_ns = setup_asm;
        ra.padding = opt.padding;

        t0 = clock::now();
        const Propagator pr(Engine::rsf_dense, g);
        const double setup_rsf = std::chrono::duration<double, std::nano>(clock::now() - t0).count();
        BenchRecord rr = detail::time_engine([&] { pr.apply(src.values(), out_rsf.values()); }, opt.reps, opt.warmup);
        rr.n = n;
        rr.engine = Engine::rsf_dense;
        rr.setup_ns = setup_rsf;
        rr.padding = 0.0;

        const double err = relative_l2(out_asm, out_rsf);
        res.rel_error.push_back(err);
        if (!(err <= opt.tolerance))
            res.correct = false;
        res.records.push_back(ra);
        res.records.push_back(rr);
    }
    return res;
}

inline void write_bench_csv(std::ostream &os, const std::vector<BenchRecord> &rows)
{
    os << "n,engine,median_ns,iqr_ns,setup_ns,padding\n";
    os.precision(12);
    for (const auto &r : rows)
        os << r.n << ',' << to_string(r.engine) << ',' << r.median_ns << ',' << r.iqr_ns << ',' << r.setup_ns << ','
           << r.padding << '\n';
}

/// Least-squares slope of log(median time) against log(cell count) for one engine.
inline double loglog_slope(const std::vector<BenchRecord> &rows, Engine e)
{
    std::vector<double> x, y;
    for (const auto &r : rows)
        if (r.engine == e)
        {
            x.push_back(std::log(static_cast<double>(r.cells())));
            y.push_back(std::log(r.median_ns));
        }
    if (x.size() < 2)
        throw std::invalid_argument("loglog_slope: need at least two sizes");
    const double k = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        mx += x[i] / k;
        my += y[i] / k;
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

inline const BenchRecord &find_record(const std::vector<BenchRecord> &rows, std::size_t n, Engine e)
{
    for (const auto &r : rows)
        if (r.n == n && r.engine == e)
            return r;
    throw std::out_of_range("find_record: no record for that size and engine");
}

} // namespace difflink

#endif
