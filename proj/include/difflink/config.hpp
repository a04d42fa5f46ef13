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

#ifndef DIFFLINK_CONFIG_HPP
#define DIFFLINK_CONFIG_HPP

#include "difflink/checkpoint.hpp"
#include "difflink/evaluation.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace difflink
{

using json = nlohmann::json;

/// Capacity, training-SNR, rank or Rician-factor sweep.
struct SweepSpec
{
    std::string kind; // capacity | training_snr | rank | rician
    std::vector<std::size_t> layers;
    std::vector<std::size_t> elements;
    std::vector<double> values; // training SNRs (dB), ranks, or Rician factors (dB)
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::string test_snr_db = "0";
    std::size_t trials = 2000;

    bool operator==(const SweepSpec &) const = default;
};

/// Experiment description in user units: lengths in millimeters, angles in degrees, SNR and
/// Rician factor in dB. `setup()` converts to SI.
struct ExperimentConfig
{
    std::uint64_t seed = 1;
    std::string output_dir = "runs/default";

    std::size_t n_x = 16, n_z = 16;
    double pitch_x_mm = 1.3375, pitch_z_mm = 1.3375;
    double layer_spacing_mm = 1.0;
    double wavelength_mm = 10.7;
    std::size_t layers_tx = 4, layers_rx = 4;

    std::size_t m_x = 4, m_z = 4;

    std::string engine = "asm";
    double padding = 2.0;
    std::string normalization = "mean";

    std::string channel_kind = "rician";
    std::optional<double> k_factor_db = 0.0; // empty: K = 0 (no line of sight)
    std::size_t rank = 16;
    std::string redraw = "fixed";
    double tx_elevation_deg = 90.0, tx_azimuth_deg = 90.0;
    double rx_elevation_deg = 90.0, rx_azimuth_deg = 90.0;

    TrainConfig train;
    std::string optimizer = "adam";
    std::string gradient = "analytic";
    std::string init = "uniform";

    std::string eval_snr_db = "-32:4:0";
    std::size_t eval_trials = 10000;

    std::optional<SweepSpec> sweep;

    bool operator==(const ExperimentConfig &) const = default;

    Geometry geometry() const
    {
        Geometry g;
        g.n_x = n_x;
        g.n_z = n_z;
        g.d_x = pitch_x_mm * 1e-3;
        g.d_z = pitch_z_mm * 1e-3;
        g.d_layer = layer_spacing_mm * 1e-3;
        g.wavelength = wavelength_mm * 1e-3;
        g.l_tx = layers_tx;
        g.l_rx = layers_rx;
        return g;
    }

    ChannelConfig channel() const
    {
        ChannelConfig c;
        c.kind = channel_kind_from_string(channel_kind);
        c.rician.k_factor = k_factor_db ? db_to_linear(*k_factor_db) : 0.0;
        const double r = pi / 180.0;
        c.rician.tx_elevation = tx_elevation_deg * r;
        c.rician.tx_azimuth = tx_azimuth_deg * r;
        c.rician.rx_elevation = rx_elevation_deg * r;
        c.rician.rx_azimuth = rx_azimuth_deg * r;
        c.rank = rank;
        c.redraw = redraw_policy_from_string(redraw);
        return c;
    }

    TrainConfig train_config() const
    {
        TrainConfig t = train;
        t.optimizer = optimizer_from_string(optimizer);
        t.gradient = gradient_mode_from_string(gradient);
        t.init = init_scheme_from_string(init);
        return t;
    }

    ExperimentSetup setup() const
    {
        ExperimentSetup s;
        s.geometry = geometry();
        s.scheme = ModulationScheme{m_x, m_z};
        s.engine = engine_from_string(engine);
        s.padding = padding;
        s.norm = detector_norm_from_string(normalization);
        s.train = train_config();
        s.channel = channel();
        return s;
    }

    std::vector<double> eval_grid() const { return parse_snr_grid(eval_snr_db); }

    /// Range and divisibility checks; errors name the offending field.
    void validate() const
    {
        auto positive = [](double v, const char *field) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw ConfigError(field, "must be a positive finite number");
        };
        if (n_x < 1)
            throw ConfigError("geometry.n_x", "must be >= 1");
        if (n_z < 1)
            throw ConfigError("geometry.n_z", "must be >= 1");
        positive(pitch_x_mm, "geometry.pitch_x_mm");
        positive(pitch_z_mm, "geometry.pitch_z_mm");
        positive(layer_spacing_mm, "geometry.layer_spacing_mm");
        positive(wavelength_mm, "geometry.wavelength_mm");
        if (layers_tx < 1)
            throw ConfigError("geometry.layers_tx", "must be >= 1");
        if (layers_rx < 1)
            throw ConfigError("geometry.layers_rx", "must be >= 1");
        if (k_factor_db && !std::isfinite(*k_factor_db))
            throw ConfigError("channel.k_factor_db", "must be finite (use null for no line of sight)");
        if (eval_trials < 1)
            throw ConfigError("eval.trials", "must be >= 1");
        (void)eval_grid();
        setup().validate();
        if (sweep)
        {
            const SweepSpec &s = *sweep;
            if (s.kind != "capacity" && s.kind != "training_snr" && s.kind != "rank" && s.kind != "rician")
                throw ConfigError("sweep.kind", "unknown sweep kind '" + s.kind +
                                                    "' (expected capacity, training_snr, rank or rician)");
            if (s.kind == "capacity" && (s.layers.empty() || s.elements.empty()))
                throw ConfigError(s.layers.empty() ? "sweep.layers" : "sweep.elements", "sweep list is empty");
            if (s.kind != "capacity" && s.values.empty())
                throw ConfigError("sweep.values", "sweep list is empty");
            if (s.seeds.empty())
                throw ConfigError("sweep.seeds", "sweep list is empty");
            if (s.trials < 1)
                throw ConfigError("sweep.trials", "must be >= 1");
            (void)parse_snr_grid(s.test_snr_db);
            for (std::size_t e : s.elements)
            {
                if (e % m_x != 0 || e % m_z != 0)
                    throw ConfigError("sweep.elements", std::to_string(e) + " is not divisible by the modulation order");
            }
            for (std::size_t l : s.layers)
                if (l < 1)
                    throw ConfigError("sweep.layers", "layer counts must be >= 1");
            if (s.kind == "rank")
                for (double v : s.values)
                    if (v < 1 || v > static_cast<double>(n_x * n_z) || v != std::floor(v))
                        throw ConfigError("sweep.values", "ranks must be integers in [1, N]");
        }
    }
};

// ------------------------------------------------------------------------
// JSON mapping

namespace detail
{
/// Reads fields of one JSON object and rejects any key that was not read.
class ObjectReader
{
public:
    ObjectReader(const json &j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j.is_object())
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    template <class T>
    void get(const char *key, T &out)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        const json &v = j_.at(key);
        const std::string p = field(key);
        try
        {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>)
            {
                if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
                    throw ConfigError(p, "expected a non-negative integer");
                out = v.get<T>();
            }
            else if constexpr (std::is_same_v<T, double>)
            {
                if (!v.is_number())
                    throw ConfigError(p, "expected a number");
                out = v.get<double>();
            }
            else if constexpr (std::is_same_v<T, bool>)
            {
                if (!v.is_boolean())
                    throw ConfigError(p, "expected true or false");
                out = v.get<bool>();
            }
            else if constexpr (std::is_same_v<T, std::string>)
            {
                if (!v.is_string())
                    throw ConfigError(p, "expected a string");
                out = v.get<std::string>();
            }
            else
            {
                if (!v.is_array())
                    throw ConfigError(p, "expected an array");
                out = v.get<T>();
            }
        }
        catch (const json::exception &e)
        {
            throw ConfigError(p, e.what());
        }
    }

    /// SNR grid given either as a number or as "lo:step:hi".
    void get_grid(const char *key, std::string &out)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        const json &v = j_.at(key);
        if (v.is_number())
        {
            std::ostringstream os;
            os.precision(17);
            os << v.get<double>();
            out = os.str();
        }
        else if (v.is_string())
            out = v.get<std::string>();
        else
            throw ConfigError(field(key), "expected a number or a 'lo:step:hi' string");
    }

    void get_optional(const char *key, std::optional<double> &out)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        const json &v = j_.at(key);
        if (v.is_null())
            out.reset();
        else if (v.is_number())
            out = v.get<double>();
        else
            throw ConfigError(field(key), "expected a number or null");
    }

    bool has(const char *key) const { return j_.contains(key); }

    ObjectReader child(const char *key)
    {
        seen_.insert(key);
        static const json empty = json::object();
        return ObjectReader(j_.contains(key) ? j_.at(key) : empty, field(key));
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError(field(it.key()), "unknown key");
    }

private:
    std::string field(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};
} // namespace detail

inline ExperimentConfig parse_config(const json &root)
{
    ExperimentConfig c;
    detail::ObjectReader r(root, "");
    r.get("seed", c.seed);
    r.get("output_dir", c.output_dir);
    {
        auto g = r.child("geometry");
        g.get("n_x", c.n_x);
        g.get("n_z", c.n_z);
        g.get("pitch_x_mm", c.pitch_x_mm);
        g.get("pitch_z_mm", c.pitch_z_mm);
        g.get("layer_spacing_mm", c.layer_spacing_mm);
        g.get("wavelength_mm", c.wavelength_mm);
        g.get("layers_tx", c.layers_tx);
        g.get("layers_rx", c.layers_rx);
        g.finish();
    }
    {
        auto m = r.child("modulation");
        m.get("m_x", c.m_x);
        m.get("m_z", c.m_z);
        m.finish();
    }
    {
        auto p = r.child("propagation");
        p.get("engine", c.engine);
        p.get("padding", c.padding);
        p.finish();
    }
    {
        auto d = r.child("detector");
        d.get("normalization", c.normalization);
        d.finish();
    }
    {
        auto ch = r.child("channel");
        ch.get("kind", c.channel_kind);
        ch.get_optional("k_factor_db", c.k_factor_db);
        ch.get("rank", c.rank);
        ch.get("redraw", c.redraw);
        ch.get("tx_elevation_deg", c.tx_elevation_deg);
        ch.get("tx_azimuth_deg", c.tx_azimuth_deg);
        ch.get("rx_elevation_deg", c.rx_elevation_deg);
        ch.get("rx_azimuth_deg", c.rx_azimuth_deg);
        ch.finish();
    }
    {
        auto t = r.child("train");
        t.get("batch_size", c.train.batch_size);
        t.get("dataset_size", c.train.dataset_size);
        t.get("epochs", c.train.epochs);
        t.get("learning_rate", c.train.learning_rate);
        t.get("optimizer", c.optimizer);
        t.get("beta1", c.train.beta1);
        t.get("beta2", c.train.beta2);
        t.get("epsilon", c.train.epsilon);
        t.get("snr_db", c.train.snr_db);
        t.get("batch_norm", c.train.batch_norm);
        t.get("gradient", c.gradient);
        t.get("freeze_tx", c.train.freeze_tx);
        t.get("freeze_rx", c.train.freeze_rx);
        t.get("init", c.init);
        t.get("calibration_batch", c.train.calibration_batch);
        t.finish();
    }
    {
        auto e = r.child("eval");
        e.get_grid("snr_db", c.eval_snr_db);
        e.get("trials", c.eval_trials);
        e.finish();
    }
    if (r.has("sweep"))
    {
        SweepSpec s;
        auto w = r.child("sweep");
        w.get("kind", s.kind);
        w.get("layers", s.layers);
        w.get("elements", s.elements);
        w.get("values", s.values);
        w.get("seeds", s.seeds);
        w.get_grid("test_snr_db", s.test_snr_db);
        w.get("trials", s.trials);
        w.finish();
        c.sweep = s;
    }
    r.finish();
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_text(const std::string &text)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (const json::parse_error &e)
    {
        throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string &path)
{
    std::ifstream f(path);
    if (!f)
        throw ConfigError("<file>", "cannot read config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

inline json to_json(const ExperimentConfig &c)
{
    json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["geometry"] = {{"n_x", c.n_x},
                     {"n_z", c.n_z},
                     {"pitch_x_mm", c.pitch_x_mm},
                     {"pitch_z_mm", c.pitch_z_mm},
                     {"layer_spacing_mm", c.layer_spacing_mm},
                     {"wavelength_mm", c.wavelength_mm},
                     {"layers_tx", c.layers_tx},
                     {"layers_rx", c.layers_rx}};
    j["modulation"] = {{"m_x", c.m_x}, {"m_z", c.m_z}};
    j["propagation"] = {{"engine", c.engine}, {"padding", c.padding}};
    j["detector"] = {{"normalization", c.normalization}};
    j["channel"] = {{"kind", c.channel_kind},
                    {"k_factor_db", c.k_factor_db ? json(*c.k_factor_db) : json(nullptr)},
                    {"rank", c.rank},
                    {"redraw", c.redraw},
                    {"tx_elevation_deg", c.tx_elevation_deg},
                    {"tx_azimuth_deg", c.tx_azimuth_deg},
                    {"rx_elevation_deg", c.rx_elevation_deg},
                    {"rx_azimuth_deg", c.rx_azimuth_deg}};
    const TrainConfig &t = c.train;
    j["train"] = {{"batch_size", t.batch_size},
                  {"dataset_size", t.dataset_size},
                  {"epochs", t.epochs},
                  {"learning_rate", t.learning_rate},
                  {"optimizer", c.optimizer},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"epsilon", t.epsilon},
                  {"snr_db", t.snr_db},
                  {"batch_norm", t.batch_norm},
                  {"gradient", c.gradient},
                  {"freeze_tx", t.freeze_tx},
                  {"freeze_rx", t.freeze_rx},
                  {"init", c.init},
                  {"calibration_batch", t.calibration_batch}};
    j["eval"] = {{"snr_db", c.eval_snr_db}, {"trials", c.eval_trials}};
    if (c.sweep)
    {
        const SweepSpec &s = *c.sweep;
        j["sweep"] = {{"kind", s.kind},         {"layers", s.layers},           {"elements", s.elements},
                      {"values", s.values},     {"seeds", s.seeds},             {"test_snr_db", s.test_snr_db},
                      {"trials", s.trials}};
    }
    return j;
}

inline std::string serialize_config(const ExperimentConfig &c) { return to_json(c).dump(2) + "\n"; }

/// Stable 16-hex-digit hash of the canonical serialization.
inline std::string config_hash(const ExperimentConfig &c)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
    return buf;
}

} // namespace difflink

#endif
