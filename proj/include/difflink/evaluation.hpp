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

#ifndef DIFFLINK_EVALUATION_HPP
#define DIFFLINK_EVALUATION_HPP

#include "difflink/channel.hpp"
#include "difflink/core.hpp"
#include "difflink/parallel.hpp"
#include "difflink/rng.hpp"
#include "difflink/training.hpp"
#include "difflink/transceiver.hpp"

#include <algorithm>
#include <array>
#include <ostream>
#include <string>
#include <vector>

namespace difflink
{

// ------------------------------------------------------------------------
// Statistics

/// Half-width of the Wilson score interval for `errors` out of `trials`.
inline double wilson_halfwidth(std::size_t errors, std::size_t trials, double z = 1.96)
{
    if (trials == 0)
        return 1.0;
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(errors) / n;
    const double z2 = z * z;
    return z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
}

/// Trials needed for about 100 expected errors at the target rate, capped at 1e6.
inline std::size_t min_trials(double target_ser)
{
    if (!(target_ser > 0.0))
        return 1000000;
    return static_cast<std::size_t>(std::min(1e6, std::ceil(100.0 / target_ser)));
}

inline double median(std::vector<double> v)
{
    if (v.empty())
        throw std::invalid_argument("median: empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

struct SerPoint
{
    double snr_db = 0.0;
    double ser = 0.0;
    std::size_t errors = 0;
    std::size_t trials = 0;
    double ci_halfwidth = 0.0;
    double sigma2 = 0.0;
};

struct SerCurve
{
    std::vector<SerPoint> points;

    const SerPoint &at(double snr_db) const
    {
        for (const auto &p : points)
            if (std::abs(p.snr_db - snr_db) < 1e-9)
                return p;
        throw std::out_of_range("SerCurve: no point at " + std::to_string(snr_db) + " dB");
    }
};

/// a lies below b with the 95% intervals not overlapping.
inline bool separated_below(double a, double a_hw, double b, double b_hw) { return a + a_hw < b - b_hw; }

/// SNR grid "lo:step:hi" in dB, inclusive of hi when it lands on the grid.
inline std::vector<double> parse_snr_grid(const std::string &spec)
{
    std::vector<double> parts;
    std::size_t pos = 0;
    while (true)
    {
        const std::size_t c = spec.find(':', pos);
        const std::string tok = spec.substr(pos, c == std::string::npos ? std::string::npos : c - pos);
        std::size_t used = 0;
        double v = 0.0;
        try
        {
            v = std::stod(tok, &used);
        }
        catch (const std::exception &)
        {
            throw ConfigError("eval.snr_db", "malformed SNR grid '" + spec + "'");
        }
        if (used != tok.size())
            throw ConfigError("eval.snr_db", "malformed SNR grid '" + spec + "'");
        parts.push_back(v);
        if (c == std::string::npos)
            break;
        pos = c + 1;
    }
    if (parts.size() == 1)
        return parts;
    if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0])
        throw ConfigError("eval.snr_db", "SNR grid must be 'lo:step:hi' with step > 0 and hi >= lo");
    std::vector<double> out;
    for (std::size_t k = 0;; ++k)
    {
        const double v = parts[0] + static_cast<double>(k) * parts[1];
        if (v > parts[2] + 1e-9)
            break;
        out.push_back(v);
    }
    return out;
}

// ------------------------------------------------------------------------
// Monte-Carlo SER of a trained transceiver

/// A fixed channel reuses the training draw. Otherwise fresh draws come from a separate
/// stream: one per trial, or one per block of trials under per-batch redraw.
struct EvalOptions
{
    std::size_t per_batch_block = 32;
};

inline SerCurve measure_ser(const Transceiver &t, const std::vector<double> &snr_points, std::size_t trials,
                            const ChannelConfig &ccfg, const RngSeed &seed, const EvalOptions &opt = {})
{
    if (trials == 0)
        throw ConfigError("eval.trials", "must be >= 1");
    t.validate();
    const Geometry &g = t.geometry;
    const ChannelModel cm(g, ccfg);
    const bool fixed = ccfg.redraw == RedrawPolicy::fixed || ccfg.kind == ChannelKind::identity;
    const RngSeed eval_seed = seed.child(0xe7a1);

    std::vector<ComplexField> tx_out(t.symbols());
    for (std::size_t m = 0; m < t.symbols(); ++m)
        tx_out[m] = transmit(t, m);

    // noise-free received field per symbol for the fixed channel
    std::vector<ComplexField> clean;
    ChannelRealization fixed_ch;
    if (fixed)
    {
        fixed_ch = cm.draw(seed, 0);
        clean.resize(t.symbols(), ComplexField(g));
        for (std::size_t m = 0; m < t.symbols(); ++m)
            channel_multiply(fixed_ch, tx_out[m].values(), clean[m].values());
    }

    SerCurve curve;
    for (std::size_t pi_ = 0; pi_ < snr_points.size(); ++pi_)
    {
        const double snr = snr_points[pi_];
        const double sigma2 = noise_variance(t.reference_power, snr);
        const std::size_t block = ccfg.redraw == RedrawPolicy::per_batch ? opt.per_batch_block : 1;
        std::vector<std::uint8_t> wrong(trials, 0);
        auto run_trial = [&](std::size_t k, const ChannelRealization *ch) {
            auto eng = seed.engine(Stream::evaluation, pi_, k);
            std::uniform_int_distribution<std::size_t> pick(0, t.symbols() - 1);
            const std::size_t sym = pick(eng);
            ComplexField v(g);
            if (ch)
                channel_multiply(*ch, tx_out[sym].values(), v.values());
            else
                v = clean[sym];
            add_noise(v.values(), sigma2, eng);
            const ComplexField out = cascade(v, t.rx, *t.propagator, Direction::rx);
            wrong[k] = detect(out, t.scheme, g, t.norm).decision != sym;
        };
        if (fixed)
            parallel_for(trials, [&](std::size_t k) { run_trial(k, nullptr); });
        else
            parallel_for((trials + block - 1) / block, [&](std::size_t c) {
                const ChannelRealization ch = cm.draw(eval_seed, pi_ * 1000003ULL + c);
                for (std::size_t k = c * block; k < std::min(trials, (c + 1) * block); ++k)
                    run_trial(k, &ch);
            });
        SerPoint p;
        p.snr_db = snr;
        p.trials = trials;
        for (auto w : wrong)
            p.errors += w;
        p.ser = static_cast<double>(p.errors) / static_cast<double>(trials);
        p.ci_halfwidth = wilson_halfwidth(p.errors, trials);
        p.sigma2 = sigma2;
        curve.points.push_back(p);
    }
    return curve;
}

inline void write_ser_csv_header(std::ostream &os) { os << "config_hash,snr_db,ser,trials,ci_halfwidth\n"; }

inline void write_ser_rows(std::ostream &os, const std::string &config_hash, const SerCurve &c)
{
    os.precision(17);
    for (const auto &p : c.points)
        os << config_hash << ',' << p.snr_db << ',' << p.ser << ',' << p.trials << ',' << p.ci_halfwidth << '\n';
}

// ------------------------------------------------------------------------
// Experiments

/// Everything needed to build and train one model.
struct ExperimentSetup
{
    Geometry geometry;
    ModulationScheme scheme;
    Engine engine = Engine::asm_fft;
    double padding = 2.0;
    DetectorNorm norm = DetectorNorm::mean;
    TrainConfig train;
    ChannelConfig channel;

    void validate() const
    {
        geometry.validate();
        scheme.validate(geometry);
        (void)padded_size(geometry.n_x, padding);
        train.validate();
        channel.validate(geometry);
    }

    bool operator==(const ExperimentSetup &) const = default;
};

struct TrainedModel
{
    Transceiver model;
    TrainReport report;
};

inline TrainedModel train_model(const ExperimentSetup &s, const RngSeed &seed, const EpochCallback &cb = {})
{
    s.validate();
    TrainedModel out{Transceiver(s.geometry, s.scheme, s.engine, s.padding, s.norm), {}};
    out.report = train(s.train, s.channel, out.model, seed, cb);
    return out;
}

struct CapacityRow
{
    std::size_t layers = 0;
    std::size_t elements = 0; // per side of the square aperture
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    double ser = 0.0;
    double ci_halfwidth = 0.0;
};

/// Trains every (layers, n) pair for every seed and records final loss and test SER at test_snr.
inline std::vector<CapacityRow> sweep_capacity(const std::vector<std::size_t> &layers,
                                               const std::vector<std::size_t> &elements, const ExperimentSetup &base,
                                               const std::vector<std::uint64_t> &seeds, double test_snr,
                                               std::size_t trials)
{
    std::vector<CapacityRow> rows;
    for (std::size_t l : layers)
        for (std::size_t e : elements)
            for (std::uint64_t sd : seeds)
            {
                ExperimentSetup s = base;
                s.geometry.l_tx = s.geometry.l_rx = l;
                s.geometry.n_x = s.geometry.n_z = e;
                const TrainedModel tm = train_model(s, RngSeed{sd});
                CapacityRow r{l, e, sd, tm.report.final_loss(), 0.0, 0.0};
                if (trials > 0)
                {
                    const SerCurve c = measure_ser(tm.model, {test_snr}, trials, s.channel, RngSeed{sd});
                    r.ser = c.points[0].ser;
                    r.ci_halfwidth = c.points[0].ci_halfwidth;
                }
                rows.push_back(r);
            }
    return rows;
}

struct LabeledCurve
{
    double label = 0.0; // training SNR, rank or Rician factor
    std::uint64_t seed = 0;
    SerCurve curve;
    double final_loss = 0.0;
};

inline std::vector<LabeledCurve> sweep_training_snr(const std::vector<double> &train_snrs,
                                                    const std::vector<double> &test_snrs, const ExperimentSetup &base,
                                                    const std::vector<std::uint64_t> &seeds, std::size_t trials)
{
    std::vector<LabeledCurve> out;
    for (double snr : train_snrs)
        for (std::uint64_t sd : seeds)
        {
            ExperimentSetup s = base;
            s.train.snr_db = snr;
            const TrainedModel tm = train_model(s, RngSeed{sd});
            out.push_back({snr, sd, measure_ser(tm.model, test_snrs, trials, s.channel, RngSeed{sd}),
                           tm.report.final_loss()});
        }
    return out;
}

enum class ChannelSweepKind
{
    rank,
    rician_db,
};

inline std::vector<LabeledCurve> sweep_channel(ChannelSweepKind kind, const std::vector<double> &values,
                                               const std::vector<double> &test_snrs, const ExperimentSetup &base,
                                               const std::vector<std::uint64_t> &seeds, std::size_t trials)
{
    std::vector<LabeledCurve> out;
    for (double v : values)
        for (std::uint64_t sd : seeds)
        {
            ExperimentSetup s = base;
            if (kind == ChannelSweepKind::rank)
            {
                s.channel.kind = ChannelKind::rank_constrained;
                s.channel.rank = static_cast<std::size_t>(std::llround(v));
            }
            else
            {
                s.channel.kind = ChannelKind::rician;
                s.channel.rician.k_factor = db_to_linear(v);
            }
            const TrainedModel tm = train_model(s, RngSeed{sd});
            out.push_back({v, sd, measure_ser(tm.model, test_snrs, trials, s.channel, RngSeed{sd}),
                           tm.report.final_loss()});
        }
    return out;
}

// ------------------------------------------------------------------------
// Conventional baseline: MRT beamforming with 16-QAM

/// Unit-energy square 16-QAM point for symbol k: I level k % 4, Q level k / 4.
inline cplx qam16_point(std::size_t k)
{
    static constexpr std::array<double, 4> lv{-3.0, -1.0, 1.0, 3.0};
    const double s = 1.0 / std::sqrt(10.0);
    return {lv[k % 4] * s, lv[k / 4] * s};
}

inline std::size_t qam16_detect(cplx y)
{
    const double s = std::sqrt(10.0);
    auto level = [](double x) -> std::size_t {
        if (x < -2.0)
            return 0;
        if (x < 0.0)
            return 1;
        if (x < 2.0)
            return 2;
        return 3;
    };
    return level(y.imag() * s) * 4 + level(y.real() * s);
}

/// Square M-QAM symbol error rate in AWGN, 1 - (1 - 2 (1 - 1/sqrt M) Q(sqrt(3 Es/N0 / (M - 1))))^2.
inline double qam_ser_closed_form(double esn0_linear, double m = 16.0)
{
    const double ps = 2.0 * (1.0 - 1.0 / std::sqrt(m)) * q_function(std::sqrt(3.0 * esn0_linear / (m - 1.0)));
    return 1.0 - (1.0 - ps) * (1.0 - ps);
}

/// Simulated 16-QAM SER over AWGN with noise variance 1 / esn0.
inline SerPoint qam16_awgn_ser(double esn0_db, std::size_t trials, const RngSeed &seed)
{
    const double sigma2 = 1.0 / db_to_linear(esn0_db);
    std::vector<std::uint8_t> wrong(trials, 0);
    parallel_for(trials, [&](std::size_t k) {
        auto eng = seed.engine(Stream::baseline, 0xa3, k);
        std::uniform_int_distribution<std::size_t> pick(0, 15);
        const std::size_t s = pick(eng);
        const cplx y = qam16_point(s) + complex_normal(eng, sigma2);
        wrong[k] = qam16_detect(y) != s;
    });
    SerPoint p;
    p.snr_db = esn0_db;
    p.trials = trials;
    for (auto w : wrong)
        p.errors += w;
    p.ser = static_cast<double>(p.errors) / static_cast<double>(trials);
    p.ci_halfwidth = wilson_halfwidth(p.errors, trials);
    p.sigma2 = sigma2;
    return p;
}

struct BaselineConfig
{
    std::size_t n_rf = 81; // square UPA, sqrt(n_rf) per side
    RicianConfig rician;
    double pitch_x = 0.125 * 10.7e-3;
    double pitch_z = 0.125 * 10.7e-3;
    double wavelength = 10.7e-3;

    std::size_t side() const
    {
        const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_rf))));
        if (n_rf < 1 || s * s != n_rf)
            throw ConfigError("baseline.n_rf", "must be a positive perfect square, got " + std::to_string(n_rf));
        return s;
    }

    Geometry geometry() const
    {
        Geometry g;
        g.n_x = g.n_z = side();
        g.d_x = pitch_x;
        g.d_z = pitch_z;
        g.wavelength = wavelength;
        return g;
    }
};

/// n_rf-antenna MRT link: per trial a Rician channel vector (TX steering plus correlated NLoS
/// normalized to ||h_nlos||^2 = n_rf), conjugate beamformer with unit total power, AWGN of
/// variance 1/snr, minimum-distance 16-QAM detection on the matched-filter output.
inline SerCurve baseline_mrt_qam(const BaselineConfig &cfg, const std::vector<double> &snr_points, std::size_t trials,
                                 const RngSeed &seed)
{
    if (trials == 0)
        throw ConfigError("baseline.trials", "must be >= 1");
    cfg.rician.validate();
    const Geometry g = cfg.geometry();
    const auto n = static_cast<Eigen::Index>(g.cells());
    const Eigen::MatrixXd sr = psd_sqrt(correlation_matrix(g));
    const Eigen::VectorXcd a = steering_vector(g, cfg.rician.tx_elevation, cfg.rician.tx_azimuth);
    const double wl = std::sqrt(cfg.rician.k_factor / (1.0 + cfg.rician.k_factor));
    const double wn = std::sqrt(1.0 / (1.0 + cfg.rician.k_factor));

    SerCurve curve;
    for (std::size_t pi_ = 0; pi_ < snr_points.size(); ++pi_)
    {
        const double sigma2 = 1.0 / db_to_linear(snr_points[pi_]);
        std::vector<std::uint8_t> wrong(trials, 0);
        parallel_for(trials, [&](std::size_t k) {
            auto eng = seed.engine(Stream::baseline, cfg.n_rf, pi_, k);
            Eigen::VectorXcd w(n);
            for (Eigen::Index i = 0; i < n; ++i)
                w(i) = complex_normal(eng, 1.0);
            Eigen::VectorXcd hn = sr.cast<cplx>() * w;
            hn *= std::sqrt(static_cast<double>(n)) / hn.norm();
            const Eigen::VectorXcd h = wl * a + wn * hn;
            const double gain = h.norm(); // h^T (h* / ||h||)
            std::uniform_int_distribution<std::size_t> pick(0, 15);
            const std::size_t s = pick(eng);
            const cplx y = gain * qam16_point(s) + complex_normal(eng, sigma2);
            wrong[k] = qam16_detect(y / gain) != s;
        });
        SerPoint p;
        p.snr_db = snr_points[pi_];
        p.trials = trials;
        for (auto wr : wrong)
            p.errors += wr;
        p.ser = static_cast<double>(p.errors) / static_cast<double>(trials);
        p.ci_halfwidth = wilson_halfwidth(p.errors, trials);
        p.sigma2 = sigma2;
        curve.points.push_back(p);
    }
    return curve;
}

} // namespace difflink

#endif
