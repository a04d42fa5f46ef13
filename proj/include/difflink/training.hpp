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

#ifndef DIFFLINK_TRAINING_HPP
#define DIFFLINK_TRAINING_HPP

#include "difflink/channel.hpp"
#include "difflink/core.hpp"
#include "difflink/parallel.hpp"
#include "difflink/rng.hpp"
#include "difflink/transceiver.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace difflink
{

enum class OptimizerKind
{
    adam,
    sgd,
};

enum class GradientMode
{
    analytic,
    finite_difference_check, // analytic updates, plus a finite-difference audit on the first batch
};

enum class InitScheme
{
    uniform,
    zero,
};

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd"; }
inline std::string to_string(GradientMode m) { return m == GradientMode::analytic ? "analytic" : "fd_check"; }
inline std::string to_string(InitScheme s) { return s == InitScheme::uniform ? "uniform" : "zero"; }

inline OptimizerKind optimizer_from_string(const std::string &s)
{
    if (s == "adam")
        return OptimizerKind::adam;
    if (s == "sgd")
        return OptimizerKind::sgd;
    throw ConfigError("train.optimizer", "unknown optimizer '" + s + "' (expected adam or sgd)");
}

inline GradientMode gradient_mode_from_string(const std::string &s)
{
    if (s == "analytic")
        return GradientMode::analytic;
    if (s == "fd_check")
        return GradientMode::finite_difference_check;
    throw ConfigError("train.gradient", "unknown gradient mode '" + s + "' (expected analytic or fd_check)");
}

inline InitScheme init_scheme_from_string(const std::string &s)
{
    if (s == "uniform")
        return InitScheme::uniform;
    if (s == "zero")
        return InitScheme::zero;
    throw ConfigError("train.init", "unknown init scheme '" + s + "' (expected uniform or zero)");
}

struct TrainConfig
{
    std::size_t batch_size = 32;
    std::size_t dataset_size = 3200;
    std::size_t epochs = 50;
    double learning_rate = 0.03;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double snr_db = -10.0;
    bool batch_norm = false;
    GradientMode gradient = GradientMode::analytic;
    bool freeze_tx = false;
    bool freeze_rx = false;
    InitScheme init = InitScheme::uniform;
    std::size_t calibration_batch = 512;

    void validate() const
    {
        if (batch_size < 1)
            throw ConfigError("train.batch_size", "must be >= 1");
        if (dataset_size < 1)
            throw ConfigError("train.dataset_size", "must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw ConfigError("train.learning_rate", "must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0))
            throw ConfigError("train.beta1", "must lie in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("train.beta2", "must lie in [0, 1)");
        if (!(epsilon > 0.0))
            throw ConfigError("train.epsilon", "must be > 0");
        if (!std::isfinite(snr_db))
            throw ConfigError("train.snr_db", "must be finite");
        if (calibration_batch < 1)
            throw ConfigError("train.calibration_batch", "must be >= 1");
    }

    bool operator==(const TrainConfig &) const = default;
};

// ------------------------------------------------------------------------
// Loss

inline constexpr double probability_floor = 1e-30;

struct LossResult
{
    double loss = 0.0;
    std::size_t clamp_events = 0;
};

/// Batch mean of -log p'_true, with p' clamped at 1e-30.
inline LossResult ce_loss(const std::vector<std::size_t> &symbols, const std::vector<std::vector<double>> &probs)
{
    if (symbols.empty() || symbols.size() != probs.size())
        throw std::invalid_argument("ce_loss: batch and probability counts differ");
    LossResult r;
    for (std::size_t i = 0; i < symbols.size(); ++i)
    {
        double p = probs[i].at(symbols[i]);
        if (p < probability_floor)
        {
            p = probability_floor;
            ++r.clamp_events;
        }
        r.loss -= std::log(p);
    }
    r.loss /= static_cast<double>(symbols.size());
    return r;
}

inline LossResult ce_loss(const BatchTrace &tr)
{
    std::vector<std::vector<double>> probs(tr.size());
    for (std::size_t i = 0; i < tr.size(); ++i)
        probs[i] = tr.detections[i].probabilities;
    return ce_loss(tr.symbols, probs);
}

// ------------------------------------------------------------------------
// Gradients

using LayerGrads = std::vector<std::vector<double>>; // [layer][cell]

struct GradientSet
{
    LayerGrads tx;
    LayerGrads rx;

    static GradientSet zeros(const Transceiver &t)
    {
        return {LayerGrads(t.tx.size(), std::vector<double>(t.cells(), 0.0)),
                LayerGrads(t.rx.size(), std::vector<double>(t.cells(), 0.0))};
    }

    double max_abs() const
    {
        double m = 0.0;
        for (const auto *side : {&tx, &rx})
            for (const auto &l : *side)
                for (double x : l)
                    m = std::max(m, std::abs(x));
        return m;
    }

    bool all_finite() const
    {
        for (const auto *side : {&tx, &rx})
            for (const auto &l : *side)
                for (double x : l)
                    if (!std::isfinite(x))
                        return false;
        return true;
    }
};

/// dL/dp for one sample's loss -log softmax(z)_true with z = p / mean(p) or z = p.
inline std::vector<double> detector_gradient(const DetectionResult &d, std::size_t truth, DetectorNorm norm)
{
    const std::size_t m = d.powers.size();
    std::vector<double> g(m);
    for (std::size_t j = 0; j < m; ++j)
        g[j] = d.probabilities[j] - (j == truth ? 1.0 : 0.0);
    if (norm == DetectorNorm::none)
        return g;
    const double mu = power_mean(d.powers);
    if (!(mu > 0.0))
        return std::vector<double>(m, 0.0);
    double gp = 0.0;
    for (std::size_t j = 0; j < m; ++j)
        gp += g[j] * d.powers[j];
    const double c = gp / (mu * mu * static_cast<double>(m));
    for (auto &x : g)
        x = x / mu - c;
    return g;
}

namespace detail
{
/// G_x from G_y for y = x / s with s the batch RMS of x.
inline void batch_norm_backward(std::vector<std::vector<cplx>> &grad, const std::vector<ComplexField> &y, double s)
{
    double kappa = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
    {
        for (std::size_t n = 0; n < y[i].size(); ++n)
            kappa += (std::conj(grad[i][n]) * y[i][n]).real();
        count += y[i].size();
    }
    kappa /= static_cast<double>(count);
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t n = 0; n < y[i].size(); ++n)
            grad[i][n] = (grad[i][n] - kappa * y[i][n]) * inv;
}

inline void accumulate_phase_grad(std::vector<double> &dst, const std::vector<std::vector<cplx>> &grad,
                                  const std::vector<ComplexField> &post)
{
    for (std::size_t i = 0; i < grad.size(); ++i)
        for (std::size_t n = 0; n < dst.size(); ++n)
            dst[n] -= (std::conj(grad[i][n]) * post[i][n]).imag();
}
} // namespace detail

/// Reverse-mode gradient of the batch-mean cross-entropy with respect to every phase angle.
/// Adjoint fields G = 2 dL/dz* travel back through the conjugate-transposed propagator
/// and channel; a phase angle theta on a field z' = exp(j theta) z receives -Im(conj(G) z').
inline GradientSet backward(const BatchTrace &tr, const Transceiver &t, bool freeze_tx = false,
                            bool freeze_rx = false)
{
    const std::size_t b = tr.size();
    if (b == 0 || tr.rx_out.size() != t.rx.size() || tr.tx_out.size() != t.tx.size() || tr.detections.size() != b)
        throw std::invalid_argument("backward: missing forward intermediates");
    const std::size_t n = t.cells();
    const Propagator &prop = *t.propagator;
    const auto owner = subarray_map(t.scheme, t.geometry);
    const double inv_b = 1.0 / static_cast<double>(b);
    const bool bn = tr.bn == BnMode::train;

    GradientSet gs = GradientSet::zeros(t);
    std::vector<std::vector<cplx>> g(b, std::vector<cplx>(n));

    // detector: p_m = sum |v|^2 over subarray m, so G_v = 2 (dL/dp_m) v
    parallel_for(b, [&](std::size_t i) {
        const auto dp = detector_gradient(tr.detections[i], tr.symbols[i], t.norm);
        const ComplexField &v = tr.detector_field(i);
        for (std::size_t j = 0; j < n; ++j)
            g[i][j] = 2.0 * dp[owner[j]] * inv_b * v[j];
    });

    std::vector<std::vector<cplx>> tmp(b, std::vector<cplx>(n));
    for (std::size_t k = 0; k < t.rx.size(); ++k)
    {
        if (bn)
            detail::batch_norm_backward(g, tr.rx_out[k], tr.rx_scale[k]);
        const auto coeff = t.rx[k].coefficients();
        parallel_for(b, [&](std::size_t i) {
            prop.apply_adjoint(g[i], tmp[i]); // gradient at psi_k * v_{k+1}
            for (std::size_t j = 0; j < n; ++j)
                g[i][j] = tmp[i][j];
        });
        if (!freeze_rx)
        {
            auto &dst = gs.rx[k];
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    dst[j] -= (std::conj(g[i][j]) * (coeff[j] * tr.rx_in[k][i][j])).imag();
        }
        parallel_for(b, [&](std::size_t i) {
            for (std::size_t j = 0; j < n; ++j)
                g[i][j] *= std::conj(coeff[j]);
        });
    }

    parallel_for(b, [&](std::size_t i) {
        channel_adjoint(*tr.channels[i], g[i], tmp[i]);
        std::swap(g[i], tmp[i]);
    });

    for (std::size_t k = t.tx.size(); k-- > 0;)
    {
        if (bn)
            detail::batch_norm_backward(g, tr.tx_out[k], tr.tx_scale[k]);
        if (!freeze_tx)
            detail::accumulate_phase_grad(gs.tx[k], g, tr.tx_phase[k]);
        if (k == 0)
            break;
        const auto coeff = t.tx[k].coefficients();
        parallel_for(b, [&](std::size_t i) {
            for (std::size_t j = 0; j < n; ++j)
                tmp[i][j] = g[i][j] * std::conj(coeff[j]);
            prop.apply_adjoint(tmp[i], g[i]);
        });
    }
    return gs;
}

// ------------------------------------------------------------------------
// Optimizers

inline void check_shapes(const LayerStack &s, const LayerGrads &g)
{
    if (s.size() != g.size())
        throw std::invalid_argument("optimizer: layer count mismatch");
    for (std::size_t l = 0; l < s.size(); ++l)
        if (s[l].size() != g[l].size())
            throw std::invalid_argument("optimizer: layer size mismatch");
}

/// phase <- wrap(phase - lr * grad).
inline void sgd_step(LayerStack &s, const LayerGrads &g, double lr)
{
    check_shapes(s, g);
    for (std::size_t l = 0; l < s.size(); ++l)
        for (std::size_t n = 0; n < s[l].size(); ++n)
            s[l].phases[n] = wrap_phase(s[l].phases[n] - lr * g[l][n]);
}

struct AdamState
{
    LayerGrads m;
    LayerGrads v;
    std::uint64_t step = 0;

    static AdamState zeros(const LayerStack &s)
    {
        AdamState a;
        for (const auto &l : s)
        {
            a.m.emplace_back(l.size(), 0.0);
            a.v.emplace_back(l.size(), 0.0);
        }
        return a;
    }
};

struct AdamParams
{
    double lr = 0.03;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam update followed by phase wrapping.
inline void adam_step(LayerStack &s, const LayerGrads &g, AdamState &st, const AdamParams &p)
{
    check_shapes(s, g);
    if (st.m.size() != s.size())
        st = AdamState::zeros(s);
    ++st.step;
    const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(st.step));
    for (std::size_t l = 0; l < s.size(); ++l)
        for (std::size_t n = 0; n < s[l].size(); ++n)
        {
            const double gi = g[l][n];
            double &m = st.m[l][n];
            double &v = st.v[l][n];
            m = p.beta1 * m + (1.0 - p.beta1) * gi;
            v = p.beta2 * v + (1.0 - p.beta2) * gi * gi;
            const double mh = m / c1, vh = v / c2;
            s[l].phases[n] = wrap_phase(s[l].phases[n] - p.lr * mh / (std::sqrt(vh) + p.epsilon));
        }
}

/// Uniform phases on (-pi, pi] or all zeros.
inline LayerStack init_phases(std::size_t layers, std::size_t n_x, std::size_t n_z, std::mt19937_64 &eng,
                              InitScheme scheme)
{
    LayerStack s = make_stack(layers, n_x, n_z);
    if (scheme == InitScheme::zero)
        return s;
    std::uniform_real_distribution<double> u(-pi, pi);
    for (auto &l : s)
        for (auto &x : l.phases)
            x = wrap_phase(u(eng));
    return s;
}

// ------------------------------------------------------------------------
// Gradient audit

/// Loss of a fixed batch (channels and noise frozen by the input).
inline double batch_loss(const Transceiver &t, const BatchInput &in, BnMode bn = BnMode::eval)
{
    return ce_loss(forward_batch(t, in, bn)).loss;
}

struct GradCheckResult
{
    double max_rel_error = 0.0;
    std::size_t parameters = 0;
};

/// Compares analytic gradients with central differences on `per_layer` random parameters of
/// every layer. Relative error uses max(|analytic|, |numeric|, 1e-7) as denominator.
inline GradCheckResult gradient_check(const Transceiver &t, const BatchInput &in, BnMode bn, std::size_t per_layer,
                                      double step, std::mt19937_64 &eng)
{
    const GradientSet gs = backward(forward_batch(t, in, bn), t);
    Transceiver probe = t;
    GradCheckResult r;
    for (int side = 0; side < 2; ++side)
    {
        LayerStack &stack = side == 0 ? probe.tx : probe.rx;
        const LayerGrads &grads = side == 0 ? gs.tx : gs.rx;
        for (std::size_t l = 0; l < stack.size(); ++l)
        {
            std::uniform_int_distribution<std::size_t> pick(0, stack[l].size() - 1);
            for (std::size_t k = 0; k < per_layer; ++k)
            {
                const std::size_t n = pick(eng);
                const double orig = stack[l].phases[n];
                stack[l].phases[n] = orig + step;
                const double up = batch_loss(probe, in, bn);
                stack[l].phases[n] = orig - step;
                const double dn = batch_loss(probe, in, bn);
                stack[l].phases[n] = orig;
                const double fd = (up - dn) / (2.0 * step);
                const double a = grads[l][n];
                const double den = std::max({std::abs(a), std::abs(fd), 1e-7});
                r.max_rel_error = std::max(r.max_rel_error, std::abs(a - fd) / den);
                ++r.parameters;
            }
        }
    }
    return r;
}

// ------------------------------------------------------------------------
// Training loop

class TrainingDiverged : public std::runtime_error
{
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string &what)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch) + ": " + what),
          epoch_(epoch), batch_(batch)
    {
    }
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

struct TrainReport
{
    std::vector<double> epoch_loss;
    std::vector<double> epoch_ser;
    double reference_power = 0.0;
    double sigma2 = 0.0;
    std::size_t clamp_events = 0;
    std::size_t bn_degenerate = 0;
    double grad_check_error = -1.0; // set when the gradient audit ran

    double final_loss() const { return epoch_loss.empty() ? std::nan("") : epoch_loss.back(); }
};

inline void write_train_csv(std::ostream &os, const TrainReport &r)
{
    os << "epoch,loss,train_ser\n";
    os.precision(17);
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
        os << e + 1 << ',' << r.epoch_loss[e] << ',' << r.epoch_ser[e] << '\n';
}

using EpochCallback = std::function<void(std::size_t epoch, double loss, double ser)>;

/// Mini-batch training of both stacks. Phases are (re)initialized from the seed, the noise
/// reference power is measured once on the initial pipeline, and sigma^2 derived from it
/// stays fixed for the run.
inline TrainReport train(const TrainConfig &cfg, const ChannelConfig &ccfg, Transceiver &t, const RngSeed &seed,
                         const EpochCallback &on_epoch = {})
{
    cfg.validate();
    t.validate();
    const Geometry &g = t.geometry;
    const ChannelModel cm(g, ccfg);

    {
        auto eng = seed.engine(Stream::init);
        t.tx = init_phases(t.tx.size(), g.n_x, g.n_z, eng, cfg.init);
        t.rx = init_phases(t.rx.size(), g.n_x, g.n_z, eng, cfg.init);
    }

    TrainReport rep;
    t.reference_power = measure_reference_power(t, cm, seed, cfg.calibration_batch);
    rep.reference_power = t.reference_power;
    rep.sigma2 = noise_variance(t.reference_power, cfg.snr_db);

    std::vector<std::size_t> dataset(cfg.dataset_size);
    {
        auto eng = seed.engine(Stream::data);
        std::uniform_int_distribution<std::size_t> pick(0, t.symbols() - 1);
        for (auto &s : dataset)
            s = pick(eng);
    }

    const std::size_t batches = (cfg.dataset_size + cfg.batch_size - 1) / cfg.batch_size;
    const BnMode bn = cfg.batch_norm ? BnMode::train : BnMode::eval;
    const AdamParams ap{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
    AdamState tx_state = AdamState::zeros(t.tx), rx_state = AdamState::zeros(t.rx);

    ChannelRealization fixed_channel;
    const bool fixed = ccfg.redraw == RedrawPolicy::fixed || ccfg.kind == ChannelKind::identity;
    if (fixed)
    {
        fixed_channel = cm.draw(seed, 0);
        fixed_channel.sigma2 = rep.sigma2;
    }

    std::uint64_t global_batch = 0, global_sample = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch)
    {
        auto shuffle_eng = seed.engine(Stream::data, epoch + 1);
        std::shuffle(dataset.begin(), dataset.end(), shuffle_eng);
        double loss_sum = 0.0;
        std::size_t errors = 0;
        for (std::size_t bi = 0; bi < batches; ++bi, ++global_batch)
        {
            const std::size_t lo = bi * cfg.batch_size, hi = std::min(lo + cfg.batch_size, cfg.dataset_size);
            const std::size_t bsz = hi - lo;
            BatchInput in;
            in.symbols.assign(dataset.begin() + static_cast<long>(lo), dataset.begin() + static_cast<long>(hi));
            in.noise_seeds.resize(bsz);
            for (std::size_t i = 0; i < bsz; ++i)
                in.noise_seeds[i] = seed.derive(Stream::noise, epoch, bi, i);

            // keep drawn channels alive for the backward pass
            std::vector<ChannelRealization> drawn;
            if (fixed)
                in.channels.assign(bsz, &fixed_channel);
            else if (ccfg.redraw == RedrawPolicy::per_batch)
            {
                drawn.push_back(cm.draw(seed, 1 + global_batch));
                drawn.back().sigma2 = rep.sigma2;
                in.channels.assign(bsz, &drawn.back());
            }
            else
            {
                drawn.resize(bsz);
                parallel_for(bsz, [&](std::size_t i) {
                    drawn[i] = cm.draw(seed, 1 + global_sample + i);
                    drawn[i].sigma2 = rep.sigma2;
                });
                for (auto &d : drawn)
                    in.channels.push_back(&d);
            }
            global_sample += bsz;

            const BatchTrace tr = forward_batch(t, in, bn);
            const LossResult lr = ce_loss(tr);
            rep.clamp_events += lr.clamp_events;
            rep.bn_degenerate += tr.bn_degenerate;
            if (!std::isfinite(lr.loss))
                throw TrainingDiverged(epoch, bi, "loss is not finite");
            loss_sum += lr.loss * static_cast<double>(bsz);
            for (std::size_t i = 0; i < bsz; ++i)
                errors += tr.detections[i].decision != tr.symbols[i];

            if (cfg.gradient == GradientMode::finite_difference_check && epoch == 0 && bi == 0)
            {
                auto eng = seed.engine(Stream::init, 0xfdc);
                rep.grad_check_error = gradient_check(t, in, bn, 5, 1e-5, eng).max_rel_error;
            }

            const GradientSet gs = backward(tr, t, cfg.freeze_tx, cfg.freeze_rx);
            if (!gs.all_finite())
                throw TrainingDiverged(epoch, bi, "gradient is not finite");
            if (cfg.optimizer == OptimizerKind::adam)
            {
                if (!cfg.freeze_tx)
                    adam_step(t.tx, gs.tx, tx_state, ap);
                if (!cfg.freeze_rx)
                    adam_step(t.rx, gs.rx, rx_state, ap);
            }
            else
            {
                if (!cfg.freeze_tx)
                    sgd_step(t.tx, gs.tx, cfg.learning_rate);
                if (!cfg.freeze_rx)
                    sgd_step(t.rx, gs.rx, cfg.learning_rate);
            }
        }
        rep.epoch_loss.push_back(loss_sum / static_cast<double>(cfg.dataset_size));
        rep.epoch_ser.push_back(static_cast<double>(errors) / static_cast<double>(cfg.dataset_size));
        if (on_epoch)
            on_epoch(epoch + 1, rep.epoch_loss.back(), rep.epoch_ser.back());
    }
    return rep;
}

} // namespace difflink

#endif
