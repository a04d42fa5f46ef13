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


#include "difflink/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv)
{
    difflink::CliOptions o;
    CLI::App app{"Train and evaluate diffractive metasurface transceivers"};
    app.set_version_flag("--version", difflink::version_string);
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string out, engine, snr;
    std::size_t threads = 0, trials = 0;
    double padding = 0.0;

    auto common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "override the output directory");
        sub->add_option("--threads", threads, "worker threads (default: $DIFFLINK_THREADS or 1)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--engine", engine, "propagation engine")->check(CLI::IsMember({"asm", "rsf"}));
        sub->add_option("--padding", padding, "zero-padding factor for the asm engine");
    };

    auto *train = app.add_subcommand("train", "train a transceiver and write a checkpoint");
    common(train);

    auto *eval = app.add_subcommand("eval", "measure symbol error rate of a checkpoint");
    common(eval);
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint file (default: <out>/checkpoint.bin)");
    eval->add_option("--snr", snr, "test SNR grid in dB, 'lo:step:hi' or a single value");
    eval->add_option("--trials", trials, "trials per SNR point");

    auto *vis = app.add_subcommand("visualize", "dump per-plane field magnitudes for one symbol");
    common(vis);
    vis->add_option("--checkpoint", o.checkpoint, "checkpoint file (default: <out>/checkpoint.bin)");
    vis->add_option("--symbol", o.symbol, "symbol index, 0-based");
    vis->add_option("--snr", snr, "add receiver noise at this SNR (default: noiseless)");

    auto *sweep = app.add_subcommand("sweep", "run the sweep section of a config (resumable)");
    common(sweep);

    auto *bench = app.add_subcommand("bench", "time asm against dense rsf propagation");
    common(bench);
    bench->add_option("--sizes", o.sizes, "comma-separated aperture sides");
    bench->add_option("--reps", o.reps, "timed repetitions per engine and size")->check(CLI::PositiveNumber);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : difflink::exit_config;
    }

    CLI::App *used = app.get_subcommands().front();
    o.command = used->get_name();
    if (used->count("--seed"))
        o.seed = seed;
    if (used->count("--out"))
        o.out = out;
    if (used->count("--threads"))
        o.threads = threads;
    if (used->count("--engine"))
        o.engine = engine;
    if (used->count("--padding"))
        o.padding = padding;
    if (used->get_option_no_throw("--snr") && used->count("--snr"))
        o.snr = snr;
    if (used->get_option_no_throw("--trials") && used->count("--trials"))
        o.trials = trials;
    return difflink::run_command(o, std::cout, std::cerr);
}
