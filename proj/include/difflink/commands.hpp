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

#ifndef DIFFLINK_COMMANDS_HPP
#define DIFFLINK_COMMANDS_HPP

#include "difflink/bench.hpp"
#include "difflink/checkpoint.hpp"
#include "difflink/config.hpp"
#include "difflink/evaluation.hpp"
#include "difflink/parallel.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace difflink
{

inline constexpr const char *version_string = "difflink 0.1.0";

enum ExitCode : int
{
    exit_ok = 0,
    exit_config = 1,
    exit_runtime = 2,
};

/// Parsed command line. Unset optionals fall back to the config file.
struct CliOptions
{
    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> threads;
    std::optional<std::string> engine;
    std::optional<double> padding;
    std::string checkpoint;
    std::optional<std::string> snr;
    std::optional<std::size_t> trials;
    std::size_t symbol = 0;
    std::string sizes = "16,32,48,64";
    std::size_t reps = 30;
};

namespace fs = std::filesystem;

// ------------------------------------------------------------------------
// Output plumbing

/// Writes through a temporary file and renames it into place, so readers never see a
/// partial file.
inline void write_file_atomic(const fs::path &path, const std::string &content)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw std::runtime_error("cannot write " + tmp.string());
        f << content;
        f.flush();
        if (!f)
            throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

/// Exclusive ownership of an output directory for the lifetime of the object.
class DirectoryLock
{
public:
    explicit DirectoryLock(const fs::path &dir)
    {
        fs::create_directories(dir);
        path_ = dir / ".difflink.lock";
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw std::runtime_error("output directory " + dir.string() + " is locked by another run (" +
                                     path_.string() + ")");
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    DirectoryLock(const DirectoryLock &) = delete;
    DirectoryLock &operator=(const DirectoryLock &) = delete;
    ~DirectoryLock()
    {
        if (fd_ >= 0)
        {
            ::close(fd_);
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }

private:
    fs::path path_;
    int fd_ = -1;
};

inline std::string manifest_text(const std::string &command, const ExperimentConfig &cfg,
                                 const std::vector<std::string> &outputs, const json &extra = json::object())
{
    json m;
    m["version"] = version_string;
    m["command"] = command;
    m["seed"] = cfg.seed;
    m["config_hash"] = config_hash(cfg);
    m["config"] = to_json(cfg);
    m["threads"] = thread_count();
    m["outputs"] = outputs;
    for (auto it = extra.begin(); it != extra.end(); ++it)
        m[it.key()] = it.value();
    return m.dump(2) + "\n";
}

inline ExperimentConfig resolve_config(const CliOptions &o)
{
    ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_config(o.config_path);
    if (o.seed)
        c.seed = *o.seed;
    if (o.out)
        c.output_dir = *o.out;
    if (o.engine)
        c.engine = *o.engine;
    if (o.padding)
        c.padding = *o.padding;
    if (o.snr)
        c.eval_snr_db = *o.snr;
    if (o.trials)
        c.eval_trials = *o.trials;
    c.validate();
    return c;
}

inline std::vector<std::size_t> parse_size_list(const std::string &s, const char *field)
{
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
    {
        try
        {
            std::size_t used = 0;
            const long v = std::stol(tok, &used);
            if (used != tok.size() || v < 1)
                throw std::invalid_argument(tok);
            out.push_back(static_cast<std::size_t>(v));
        }
        catch (const std::exception &)
        {
            throw ConfigError(field, "expected a comma-separated list of positive integers, got '" + s + "'");
        }
    }
    if (out.empty())
        throw ConfigError(field, "list is empty");
    return out;
}

// ------------------------------------------------------------------------
// Subcommands

inline int cmd_train(const CliOptions &o, std::ostream &log)
{
    const ExperimentConfig cfg = resolve_config(o);
    const fs::path dir = cfg.output_dir;
    DirectoryLock lock(dir);
    const ExperimentSetup s = cfg.setup();
    log << "training " << s.geometry.n_x << "x" << s.geometry.n_z << ", " << s.geometry.l_tx << "+"
        << s.geometry.l_rx << " layers, " << cfg.train.epochs << " epochs, seed " << cfg.seed << "\n";
    TrainedModel tm;
    try
    {
        tm = train_model(s, RngSeed{cfg.seed}, [&](std::size_t e, double loss, double ser) {
            log << "epoch " << e << " loss " << loss << " train_ser " << ser << "\n";
        });
    }
    catch (const TrainingDiverged &e)
    {
        write_file_atomic(dir / "diverged.txt", std::string(e.what()) + "\nconfig_hash " + config_hash(cfg) + "\n");
        throw;
    }
    std::ostringstream csv;
    write_train_csv(csv, tm.report);
    write_file_atomic(dir / "checkpoint.bin", serialize_checkpoint(tm.model));
    write_file_atomic(dir / "train_loss.csv", csv.str());
    write_file_atomic(dir / "config.json", serialize_config(cfg));
    json extra = {{"reference_power", tm.report.reference_power},
                  {"sigma2", tm.report.sigma2},
                  {"final_loss", tm.report.final_loss()}};
    if (tm.report.grad_check_error >= 0.0)
        extra["grad_check_max_rel_error"] = tm.report.grad_check_error;
    write_file_atomic(dir / "manifest.json",
                      manifest_text("train", cfg, {"checkpoint.bin", "train_loss.csv", "config.json"}, extra));
    log << "final loss " << tm.report.final_loss() << ", sigma2 " << tm.report.sigma2 << "\n";
    return exit_ok;
}

inline Transceiver load_model_for(const CliOptions &o, const ExperimentConfig &cfg)
{
    const std::string path = o.checkpoint.empty() ? (fs::path(cfg.output_dir) / "checkpoint.bin").string()
                                                  : o.checkpoint;
    const Engine e = engine_from_string(cfg.engine);
    Transceiver t = load_checkpoint(path, o.engine ? &e : nullptr);
    if (!o.config_path.empty())
    {
        const Geometry g = cfg.geometry();
        if (!(g == t.geometry) || !(ModulationScheme{cfg.m_x, cfg.m_z} == t.scheme))
            throw ConfigError("geometry", "checkpoint " + path + " does not match the config geometry or modulation");
    }
    return t;
}

inline int cmd_eval(const CliOptions &o, std::ostream &log)
{
    if (o.trials && *o.trials == 0)
        throw ConfigError("eval.trials", "must be >= 1");
    const ExperimentConfig cfg = resolve_config(o);
    const Transceiver t = load_model_for(o, cfg);
    const fs::path dir = cfg.output_dir;
    DirectoryLock lock(dir);
    const auto grid = cfg.eval_grid();
    const SerCurve c = measure_ser(t, grid, cfg.eval_trials, cfg.channel(), RngSeed{cfg.seed});
    std::ostringstream csv;
    write_ser_csv_header(csv);
    write_ser_rows(csv, config_hash(cfg), c);
    write_file_atomic(dir / "ser.csv", csv.str());
    write_file_atomic(dir / "eval_manifest.json", manifest_text("eval", cfg, {"ser.csv"}));
    for (const auto &p : c.points)
        log << "snr " << p.snr_db << " dB: ser " << p.ser << " +- " << p.ci_halfwidth << " (" << p.trials
            << " trials)\n";
    return exit_ok;
}

inline std::string plane_label(std::size_t k, std::size_t ltx, std::size_t lrx)
{
    if (k == 0)
        return "modulator";
    if (k <= ltx)
        return "tx" + std::to_string(k);
    if (k <= ltx + lrx)
        return "rx" + std::to_string(ltx + lrx + 1 - k); // v_L .. v_1
    return "detector";
}

inline int cmd_visualize(const CliOptions &o, std::ostream &log)
{
    const ExperimentConfig cfg = resolve_config(o);
    const Transceiver t = load_model_for(o, cfg);
    if (o.symbol >= t.symbols())
        throw ConfigError("symbol", "symbol " + std::to_string(o.symbol) + " outside [0, " +
                                        std::to_string(t.symbols()) + ")");
    const ChannelModel cm(t.geometry, cfg.channel());
    ChannelRealization ch = cm.draw(RngSeed{cfg.seed}, 0);
    ch.sigma2 = o.snr ? noise_variance(t.reference_power, parse_snr_grid(*o.snr).at(0)) : 0.0;
    auto eng = RngSeed{cfg.seed}.engine(Stream::noise, 0x715);
    const ForwardResult r = forward(t, o.symbol, ch, eng, true);
    const auto grids = dump_fields(r.planes);

    const fs::path dir = fs::path(cfg.output_dir) / ("visualize_symbol_" + std::to_string(o.symbol));
    DirectoryLock lock(dir);
    std::vector<std::string> outputs;
    for (std::size_t k = 0; k < grids.size(); ++k)
    {
        char stem[64];
        std::snprintf(stem, sizeof stem, "plane_%02zu_%s", k,
                      plane_label(k, t.tx.size(), t.rx.size()).c_str());
        std::ostringstream pgm(std::ios::binary), csv;
        write_pgm(pgm, grids[k], t.geometry.n_x, t.geometry.n_z);
        write_grid_csv(csv, grids[k], t.geometry.n_x, t.geometry.n_z);
        write_file_atomic(dir / (std::string(stem) + ".pgm"), pgm.str());
        write_file_atomic(dir / (std::string(stem) + ".csv"), csv.str());
        outputs.push_back(std::string(stem) + ".pgm");
        outputs.push_back(std::string(stem) + ".csv");
    }
    write_file_atomic(dir / "manifest.json",
                      manifest_text("visualize", cfg, outputs,
                                    {{"symbol", o.symbol}, {"decision", r.detection.decision}, {"sigma2", ch.sigma2}}));
    log << grids.size() << " planes written to " << dir.string() << ", decision " << r.detection.decision << "\n";
    return exit_ok;
}

// ------------------------------------------------------------------------
// Resumable sweeps

struct SweepCell
{
    std::string hash;
    ExperimentConfig cfg;
    std::string label_a, label_b;
};

inline std::vector<SweepCell> expand_sweep(const ExperimentConfig &base)
{
    const SweepSpec &s = *base.sweep;
    std::vector<SweepCell> cells;
    auto push = [&](ExperimentConfig c, std::string a, std::string b) {
        c.sweep.reset();
        cells.push_back({config_hash(c), std::move(c), std::move(a), std::move(b)});
    };
    auto fmt = [](double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    };
    for (std::uint64_t seed : s.seeds)
    {
        if (s.kind == "capacity")
        {
            for (std::size_t l : s.layers)
                for (std::size_t e : s.elements)
                {
                    ExperimentConfig c = base;
                    c.seed = seed;
                    c.layers_tx = c.layers_rx = l;
                    c.n_x = c.n_z = e;
                    push(c, std::to_string(l), std::to_string(e));
                }
            continue;
        }
        for (double v : s.values)
        {
            ExperimentConfig c = base;
            c.seed = seed;
            if (s.kind == "training_snr")
                c.train.snr_db = v;
            else if (s.kind == "rank")
            {
                c.channel_kind = "rank";
                c.rank = static_cast<std::size_t>(v);
            }
            else
            {
                c.channel_kind = "rician";
                c.k_factor_db = v;
            }
            push(c, fmt(v), "");
        }
    }
    return cells;
}

inline const char *sweep_header = "config_hash,snr_db,ser,trials,ci_halfwidth,kind,param_a,param_b,seed,final_loss\n";

/// Keeps rows of cells whose every SNR point is present and well formed. A truncated or
/// malformed row (typically the last one after an interrupt) invalidates its cell.
inline std::map<std::string, std::vector<std::string>> load_completed_cells(const fs::path &csv, std::size_t points)
{
    std::map<std::string, std::vector<std::string>> rows;
    std::ifstream f(csv);
    if (!f)
        return rows;
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::set<std::string> bad;
    std::size_t pos = content.find('\n');
    if (pos == std::string::npos)
        return {};
    ++pos;
    while (pos < content.size())
    {
        const std::size_t end = content.find('\n', pos);
        const std::string line = content.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        const bool terminated = end != std::string::npos;
        pos = terminated ? end + 1 : content.size();
        if (line.empty())
            continue;
        const auto comma = line.find(',');
        const std::string hash = line.substr(0, comma);
        const bool ok = terminated && std::count(line.begin(), line.end(), ',') == 9 && hash.size() == 16 &&
                        line.find_first_not_of("0123456789abcdefghijklmnopqrstuvwxyz,.-+_e") == std::string::npos;
        if (!ok)
        {
            bad.insert(hash);
            continue;
        }
        rows[hash].push_back(line);
    }
    for (auto it = rows.begin(); it != rows.end();)
        if (bad.count(it->first) || it->second.size() != points)
            it = rows.erase(it);
        else
            ++it;
    return rows;
}

inline int cmd_sweep(const CliOptions &o, std::ostream &log)
{
    const ExperimentConfig cfg = resolve_config(o);
    if (!cfg.sweep)
        throw ConfigError("sweep", "config has no sweep section");
    const fs::path dir = cfg.output_dir;
    DirectoryLock lock(dir);
    const SweepSpec &s = *cfg.sweep;
    const auto grid = parse_snr_grid(s.test_snr_db);
    const auto cells = expand_sweep(cfg);
    const fs::path csv = dir / "sweep.csv";

    auto done = load_completed_cells(csv, grid.size());
    {
        std::string keep = sweep_header;
        for (const auto &c : cells)
            if (auto it = done.find(c.hash); it != done.end())
                for (const auto &row : it->second)
                    keep += row + "\n";
        write_file_atomic(csv, keep);
    }
    std::size_t skipped = 0, ran = 0;
    for (const auto &cell : cells)
    {
        if (done.count(cell.hash))
        {
            ++skipped;
            continue;
        }
        log << "cell " << cell.hash << " (" << s.kind << " " << cell.label_a
            << (cell.label_b.empty() ? "" : "x" + cell.label_b) << ", seed " << cell.cfg.seed << ")\n";
        const TrainedModel tm = train_model(cell.cfg.setup(), RngSeed{cell.cfg.seed});
        const SerCurve c = measure_ser(tm.model, grid, s.trials, cell.cfg.channel(), RngSeed{cell.cfg.seed});
        std::ostringstream rows;
        rows.precision(17);
        for (const auto &p : c.points)
            rows << cell.hash << ',' << p.snr_db << ',' << p.ser << ',' << p.trials << ',' << p.ci_halfwidth << ','
                 << s.kind << ',' << cell.label_a << ',' << cell.label_b << ',' << cell.cfg.seed << ','
                 << tm.report.final_loss() << '\n';
        std::ofstream f(csv, std::ios::app);
        f << rows.str();
        f.flush();
        if (!f)
            throw std::runtime_error("cannot append to " + csv.string());
        ++ran;
    }
    write_file_atomic(dir / "manifest.json",
                      manifest_text("sweep", cfg, {"sweep.csv"}, {{"cells", cells.size()}, {"skipped", skipped}}));
    log << ran << " cells computed, " << skipped << " reused\n";
    return exit_ok;
}

inline int cmd_bench(const CliOptions &o, std::ostream &log)
{
    const ExperimentConfig cfg = resolve_config(o);
    BenchOptions bo;
    bo.padding = cfg.padding;
    bo.reps = o.reps;
    bo.base = cfg.geometry();
    const auto sizes = parse_size_list(o.sizes, "sizes");
    const fs::path dir = cfg.output_dir;
    DirectoryLock lock(dir);
    const BenchResult r = bench_propagation(sizes, bo, RngSeed{cfg.seed});
    std::ostringstream csv;
    write_bench_csv(csv, r.records);
    write_file_atomic(dir / "bench.csv", csv.str());
    json extra = {{"rel_error", r.rel_error}, {"correct", r.correct}};
    if (sizes.size() >= 2)
    {
        extra["slope_asm"] = loglog_slope(r.records, Engine::asm_fft);
        extra["slope_rsf"] = loglog_slope(r.records, Engine::rsf_dense);
        log << "log-log slope asm " << extra["slope_asm"].get<double>() << ", rsf "
            << extra["slope_rsf"].get<double>() << "\n";
    }
    write_file_atomic(dir / "manifest.json", manifest_text("bench", cfg, {"bench.csv"}, extra));
    for (std::size_t i = 0; i < sizes.size(); ++i)
        log << sizes[i] << "x" << sizes[i] << ": asm/rsf relative L2 " << r.rel_error[i] << "\n";
    if (!r.correct)
    {
        log << "error: engine outputs disagree beyond tolerance " << bo.tolerance << "\n";
        return exit_runtime;
    }
    return exit_ok;
}

/// Dispatches a subcommand and maps failures to exit codes.
inline int run_command(const CliOptions &o, std::ostream &log, std::ostream &err)
{
    try
    {
        if (o.threads)
            set_thread_count(*o.threads);
        if (o.command == "train")
            return cmd_train(o, log);
        if (o.command == "eval")
            return cmd_eval(o, log);
        if (o.command == "visualize")
            return cmd_visualize(o, log);
        if (o.command == "sweep")
            return cmd_sweep(o, log);
        if (o.command == "bench")
            return cmd_bench(o, log);
        err << "error: unknown command '" << o.command << "'\n";
        return exit_config;
    }
    catch (const ConfigError &e)
    {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    }
    catch (const std::exception &e)
    {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
}

} // namespace difflink

#endif
