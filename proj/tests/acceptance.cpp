// Acceptance checks. Each criterion prints one PASS or FAIL line; measured values are
// printed above it. Run one criterion with --criterion N, or all of them with no argument.

#include "difflink.hpp"

#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <thread>

using namespace difflink;

namespace
{

struct Verdict
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char *f, ...)
{
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

void note(const std::string &s) { std::cout << "  " << s << std::endl; }

Geometry reference_geometry(std::size_t n = 16, std::size_t layers = 4)
{
    Geometry g; // 10.7 mm carrier, 0.125 wavelength pitch, 1 mm spacing
    g.n_x = g.n_z = n;
    g.l_tx = g.l_rx = layers;
    return g;
}

ComplexField random_field(const Geometry &g, std::uint64_t seed)
{
    std::mt19937_64 eng(seed);
    ComplexField f(g);
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = complex_normal(eng);
    return f;
}

/// Desk-scale setup: M = 16, K_R = 0 dB, fixed channel, Adam lr 0.03, batch 32, 3200 samples.
ExperimentSetup desk_setup(std::size_t n = 16, std::size_t layers = 4)
{
    ExperimentSetup s;
    s.geometry = reference_geometry(n, layers);
    s.scheme = {4, 4};
    s.channel.kind = ChannelKind::rician;
    s.channel.rician.k_factor = db_to_linear(0.0);
    s.channel.rician.tx_elevation = s.channel.rician.rx_elevation = pi / 3;
    s.channel.rician.tx_azimuth = s.channel.rician.rx_azimuth = pi / 6;
    s.train.batch_size = 32;
    s.train.dataset_size = 3200;
    s.train.learning_rate = 0.03;
    s.train.optimizer = OptimizerKind::adam;
    s.train.snr_db = -10.0;
    return s;
}

// ------------------------------------------------------------------------

Verdict c1()
{
    bool ok = true;
    std::string detail;
    for (std::size_t n : {8u, 16u})
    {
        Geometry g = reference_geometry(n);
        const double dist = 4.0 * g.wavelength;
        const ComplexField src = random_field(g, 100 + n);
        const ComplexField ref = propagate_rsf(src, g, dist);
        const double err = relative_l2(propagate_asm(src, build_asm_transfer(g, dist, 4.0)), ref);
        note(fmt("%zux%zu, distance 4 wavelengths, padding 4: relative L2 error %.4f (bound 0.02)", n, n, err));
        ok = ok && err <= 0.02;
        detail += fmt("%zux%zu@4wl=%.3f ", n, n, err);
    }
    for (std::size_t n : {8u, 16u})
    {
        Geometry g = reference_geometry(n);
        const ComplexField src = random_field(g, 200 + n);
        const ComplexField ref = propagate_rsf(src, g);
        double prev = std::numeric_limits<double>::infinity();
        bool mono = true;
        std::string row;
        for (double p : {1.0, 2.0, 4.0})
        {
            const double err = relative_l2(propagate_asm(src, build_asm_transfer(g, p)), ref);
            row += fmt(" p%.0f=%.4f", p, err);
            mono = mono && err <= prev;
            prev = err;
        }
        note(fmt("%zux%zu, d_L = 1 mm:%s (%s)", n, n, row.c_str(), mono ? "non-increasing" : "INCREASING"));
        ok = ok && mono;
        detail += fmt("%zux%zu@1mm %s ", n, n, mono ? "monotone" : "not monotone");
    }
    return {ok, detail};
}

Verdict c2()
{
    Geometry g = reference_geometry(4, 2);
    double worst = 0.0;
    std::size_t params = 0;
    struct Case
    {
        DetectorNorm norm;
        BnMode bn;
        Engine engine;
        const char *name;
    };
    const Case cases[] = {{DetectorNorm::mean, BnMode::eval, Engine::asm_fft, "asm, mean-normalized detector"},
                          {DetectorNorm::none, BnMode::eval, Engine::asm_fft, "asm, raw softmax"},
                          {DetectorNorm::mean, BnMode::train, Engine::asm_fft, "asm, batch norm"},
                          {DetectorNorm::mean, BnMode::eval, Engine::rsf_dense, "rsf, mean-normalized detector"}};
    for (const auto &c : cases)
    {
        Transceiver t(g, ModulationScheme{4, 4}, c.engine, 2.0, c.norm);
        std::mt19937_64 eng(77);
        t.tx = init_phases(2, 4, 4, eng, InitScheme::uniform);
        t.rx = init_phases(2, 4, 4, eng, InitScheme::uniform);
        ChannelModel cm(g, ChannelConfig{});
        ChannelRealization ch = cm.draw(RngSeed{77}, 0);
        t.reference_power = measure_reference_power(t, cm, RngSeed{77}, 256);
        ch.sigma2 = noise_variance(t.reference_power, 0.0);
        BatchInput in;
        for (std::size_t i = 0; i < 16; ++i)
        {
            in.symbols.push_back(i);
            in.channels.push_back(&ch);
            in.noise_seeds.push_back(RngSeed{77}.derive(Stream::noise, i));
        }
        std::mt19937_64 pick(5);
        const GradCheckResult r = gradient_check(t, in, c.bn, 20, 1e-5, pick);
        note(fmt("%s: %zu parameters, max relative error %.3e", c.name, r.parameters, r.max_rel_error));
        worst = std::max(worst, r.max_rel_error);
        params += r.parameters;
    }
    return {worst <= 1e-4, fmt("max relative error %.3e over %zu parameters (bound 1e-4)", worst, params)};
}

Verdict c3()
{
    ExperimentSetup s = desk_setup();
    s.train.epochs = 50;
    const TrainedModel tm = train_model(s, RngSeed{1}, [](std::size_t e, double loss, double ser) {
        if (e % 10 == 0)
            note(fmt("epoch %zu: loss %.4f, train SER %.4f", e, loss, ser));
    });
    const double bound = 0.1 * std::log(16.0);
    const double loss = tm.report.final_loss();
    const SerCurve c = measure_ser(tm.model, {-20.0, -10.0, 0.0}, 10000, s.channel, RngSeed{1});
    for (const auto &p : c.points)
        note(fmt("test SNR %+.0f dB: SER %.5f +- %.5f (%zu trials)", p.snr_db, p.ser, p.ci_halfwidth, p.trials));
    const double ser0 = c.at(0.0).ser;
    note(fmt("untrained loss log 16 = %.4f, final loss %.4f, bound %.4f", std::log(16.0), loss, bound));
    return {loss <= bound && ser0 <= 1e-2, fmt("final loss %.4f (<= %.4f), SER at 0 dB %.5f (<= 0.01)", loss, bound, ser0)};
}

Verdict c4()
{
    ExperimentSetup s = desk_setup();
    s.train.snr_db = -20.0;
    s.train.epochs = 10;
    const std::vector<std::size_t> ls{2, 4, 6}, ns{8, 12, 16};
    std::map<std::pair<std::size_t, std::size_t>, double> med;
    for (std::size_t l : ls)
        for (std::size_t n : ns)
        {
            std::vector<double> losses;
            for (std::uint64_t seed : {1u, 2u, 3u})
            {
                ExperimentSetup c = s;
                c.geometry.l_tx = c.geometry.l_rx = l;
                c.geometry.n_x = c.geometry.n_z = n;
                losses.push_back(train_model(c, RngSeed{seed}).report.final_loss());
            }
            med[{l, n}] = median(losses);
            note(fmt("L=%zu N=%2zux%-2zu: final losses %.4f %.4f %.4f, median %.4f", l, n, n, losses[0], losses[1],
                     losses[2], med[{l, n}]));
        }
    // along L for each N, and along N for each L
    int inv_l = 0, inv_n = 0;
    bool extreme = true;
    for (std::size_t n : ns)
    {
        for (std::size_t i = 0; i + 1 < ls.size(); ++i)
            inv_l += med[{ls[i + 1], n}] > med[{ls[i], n}];
        extreme = extreme && med[{ls.back(), n}] <= med[{ls.front(), n}];
    }
    for (std::size_t l : ls)
    {
        for (std::size_t i = 0; i + 1 < ns.size(); ++i)
            inv_n += med[{l, ns[i + 1]}] > med[{l, ns[i]}];
        extreme = extreme && med[{l, ns.back()}] <= med[{l, ns.front()}];
    }
    note(fmt("inversions along L: %d, along N: %d, extreme pairs ordered: %s", inv_l, inv_n, extreme ? "yes" : "no"));
    return {inv_l <= 1 && inv_n <= 1 && extreme,
            fmt("%d inversion(s) along depth, %d along aperture, extremes %s", inv_l, inv_n,
                extreme ? "ordered" : "inverted")};
}

struct GroupSer
{
    double median_ser;
    double halfwidth;
};

/// Median SER at 0 dB over three seeds, with the Wilson half-width of the median seed.
GroupSer trained_group(const ExperimentSetup &s, const char *label)
{
    std::vector<std::pair<double, double>> rows;
    for (std::uint64_t seed : {1u, 2u, 3u})
    {
        const TrainedModel tm = train_model(s, RngSeed{seed});
        const SerPoint p = measure_ser(tm.model, {0.0}, 10000, s.channel, RngSeed{seed}).points[0];
        note(fmt("%s seed %llu: final loss %.4f, SER at 0 dB %.5f +- %.5f", label,
                 static_cast<unsigned long long>(seed), tm.report.final_loss(), p.ser, p.ci_halfwidth));
        rows.emplace_back(p.ser, p.ci_halfwidth);
    }
    std::sort(rows.begin(), rows.end());
    return {rows[1].first, rows[1].second};
}

Verdict compare_groups(const ExperimentSetup &better, const char *lb, const ExperimentSetup &worse, const char *lw)
{
    const GroupSer a = trained_group(better, lb);
    const GroupSer b = trained_group(worse, lw);
    const bool ok = separated_below(a.median_ser, a.halfwidth, b.median_ser, b.halfwidth);
    return {ok, fmt("median SER at 0 dB: %s %.5f +- %.5f vs %s %.5f +- %.5f", lb, a.median_ser, a.halfwidth, lw,
                    b.median_ser, b.halfwidth)};
}

Verdict c5()
{
    ExperimentSetup s = desk_setup();
    s.train.epochs = 20;
    s.channel.kind = ChannelKind::rank_constrained;
    ExperimentSetup r16 = s, r1 = s;
    r16.channel.rank = 16;
    r1.channel.rank = 1;
    return compare_groups(r16, "rank 16", r1, "rank 1");
}

Verdict c6()
{
    ExperimentSetup s = desk_setup();
    s.train.epochs = 20;
    ExperimentSetup k0 = s, k20 = s;
    k0.channel.rician.k_factor = db_to_linear(0.0);
    k20.channel.rician.k_factor = db_to_linear(20.0);
    return compare_groups(k0, "K 0 dB", k20, "K 20 dB");
}

Verdict c7()
{
    Geometry g = reference_geometry(16);
    g.d_x = g.d_z = 0.5 * g.wavelength;
    const AsmTransfer half = build_asm_transfer(g, 2.0);
    std::size_t unit_half = 0;
    double worst = 0.0;
    for (const auto &s : spectrum_passband_plot(half))
    {
        worst = std::max(worst, std::abs(s.magnitude - 1.0));
        unit_half += half.is_propagating(s.index, 0);
    }
    const bool all_unit = worst <= 4 * std::numeric_limits<double>::epsilon() && unit_half == half.p_x;
    note(fmt("half-wavelength pitch: %zu of %zu axis samples propagating, max | |h| - 1 | = %.1e", unit_half, half.p_x,
             worst));

    g.d_x = g.d_z = 0.125 * g.wavelength;
    const AsmTransfer tight = build_asm_transfer(g, 2.0);
    std::size_t unit_tight = 0;
    const auto axis = spectrum_passband_plot(tight);
    for (const auto &s : axis)
        unit_tight += tight.is_propagating(s.index, 0);
    const double frac_half = double(unit_half) / double(half.p_x), frac_tight = double(unit_tight) / double(tight.p_x);
    note(fmt("0.125-wavelength pitch: propagating fraction %.4f vs %.4f", frac_tight, frac_half));

    bool decreasing = true;
    std::size_t stop = 0;
    for (double d : {0.5e-3, 1e-3, 2e-3, 4e-3})
    {
        Geometry a = g, b = g;
        a.d_layer = d;
        b.d_layer = 2.0 * d;
        const AsmTransfer ta = build_asm_transfer(a, 2.0), tb = build_asm_transfer(b, 2.0);
        const auto sa = spectrum_passband_plot(ta), sb = spectrum_passband_plot(tb);
        for (std::size_t i = 0; i < sa.size(); ++i)
            if (!ta.is_propagating(sa[i].index, 0))
            {
                ++stop;
                decreasing = decreasing && sb[i].magnitude < sa[i].magnitude;
            }
    }
    note(fmt("stopband samples compared across spacing doublings: %zu, all strictly smaller: %s", stop,
             decreasing ? "yes" : "no"));
    const bool ok = all_unit && frac_tight < frac_half && unit_tight > 0 && decreasing && stop > 0;
    return {ok, fmt("unit passband at half wavelength %s, fraction %.3f < %.3f, stopband decay %s",
                    all_unit ? "yes" : "no", frac_tight, frac_half, decreasing ? "strict" : "violated")};
}

Verdict c8()
{
    BenchOptions o;
    o.reps = 30;
    o.base = reference_geometry(16);
    const BenchResult r = bench_propagation({16, 32, 48, 64}, o, RngSeed{1});
    for (std::size_t n : {16u, 32u, 48u, 64u})
    {
        const auto &a = find_record(r.records, n, Engine::asm_fft);
        const auto &d = find_record(r.records, n, Engine::rsf_dense);
        note(fmt("%2zux%-2zu: asm median %.3e ns (iqr %.1e), rsf median %.3e ns (iqr %.1e)", n, n, a.median_ns,
                 a.iqr_ns, d.median_ns, d.iqr_ns));
    }
    const double ratio =
        find_record(r.records, 64, Engine::asm_fft).median_ns / find_record(r.records, 64, Engine::rsf_dense).median_ns;
    const double sa = loglog_slope(r.records, Engine::asm_fft), sr = loglog_slope(r.records, Engine::rsf_dense);
    const bool ok = ratio <= 0.1 && sr >= 1.7 && sr <= 2.3 && sa >= 0.8 && sa <= 1.5 && r.correct;
    return {ok, fmt("64x64 asm/rsf time ratio %.4f (<= 0.1), slope rsf %.3f in [1.7, 2.3], asm %.3f in [0.8, 1.5]%s",
                    ratio, sr, sa, r.correct ? "" : ", engine outputs disagree")};
}

Verdict c9()
{
    std::vector<std::string> failed;
    auto check = [&](bool ok, const char *name) {
        note(fmt("%-34s %s", name, ok ? "ok" : "FAILED"));
        if (!ok)
            failed.push_back(name);
    };
    std::mt19937_64 eng(9);

    {
        bool ok = true;
        for (std::size_t nx : {1u, 7u, 16u, 64u})
            for (std::size_t nz : {1u, 5u, 64u})
            {
                std::vector<char> seen(nx * nz, 0);
                for (std::size_t iz = 0; iz < nz; ++iz)
                    for (std::size_t ix = 0; ix < nx; ++ix)
                    {
                        const std::size_t n = flat_index(ix, iz, nx, nz);
                        ok = ok && !seen[n] && grid_coords(n, nx, nz) == std::pair{ix, iz};
                        seen[n] = 1;
                    }
            }
        check(ok, "index bijection");
    }
    {
        std::uniform_real_distribution<double> u(-1e3, 1e3);
        PhaseLayer l(32, 32);
        for (auto &p : l.phases)
            p = u(eng);
        bool ok = true;
        for (auto c : l.coefficients())
            ok = ok && std::abs(std::abs(c) - 1.0) < 1e-14;
        check(ok, "unit modulus");
    }
    {
        const Geometry g = reference_geometry(12);
        const ComplexField a = random_field(g, 1), b = random_field(g, 2);
        const cplx x(0.7, -0.2), y(-1.3, 2.1);
        bool ok = true;
        for (Engine e : {Engine::asm_fft, Engine::rsf_dense})
        {
            const Propagator p(e, g);
            ok = ok && relative_l2(p(x * a + y * b), x * p(a) + y * p(b)) < 1e-12;
        }
        check(ok, "propagation linearity");
    }
    {
        Geometry g = reference_geometry(16);
        g.d_x = g.d_z = 0.5 * g.wavelength;
        const AsmTransfer t = build_asm_transfer(g, 4.0 * g.wavelength, 1.0);
        std::vector<cplx> spec(t.samples.size(), 0.0);
        for (std::size_t i = 0; i < spec.size(); ++i)
            if (t.propagating[i])
                spec[i] = complex_normal(eng);
        Fft2d(t.p_z, t.p_x).inverse(spec.data());
        const ComplexField src(16, 16, spec);
        const double in = field_power(src), out = field_power(propagate_asm(src, t));
        check(std::abs(out - in) <= 1e-6 * in, "band-limited energy conservation");
    }
    {
        std::uniform_real_distribution<double> u(-50.0, 50.0);
        bool ok = true;
        for (int k = 0; k < 1000; ++k)
        {
            std::vector<double> z(16);
            for (auto &v : z)
                v = u(eng);
            const auto p = softmax(z);
            double s = 0.0;
            for (double v : p)
            {
                ok = ok && v > 0.0;
                s += v;
            }
            ok = ok && std::abs(s - 1.0) <= 1e-12;
        }
        check(ok, "softmax normalization");
    }
    {
        const Geometry g = reference_geometry(16);
        const ModulationScheme s{4, 4};
        bool ok = true;
        for (int k = 0; k < 200; ++k)
        {
            const ComplexField v = random_field(g, 1000 + k);
            const cplx c = complex_normal(eng) * 100.0;
            ok = ok && detect(v, s, g).decision == detect(c * v, s, g).decision;
        }
        check(ok, "argmax scale invariance");
    }
    {
        ExperimentSetup s = desk_setup(8, 2);
        s.train.epochs = 2;
        s.train.dataset_size = 320;
        s.channel.redraw = RedrawPolicy::per_sample;
        const TrainedModel a = train_model(s, RngSeed{4});
        const std::size_t threads = thread_count();
        set_thread_count(threads == 1 ? 2 : 1);
        const TrainedModel b = train_model(s, RngSeed{4});
        const SerCurve ca = measure_ser(a.model, {-10.0}, 2000, s.channel, RngSeed{4});
        const SerCurve cb = measure_ser(b.model, {-10.0}, 2000, s.channel, RngSeed{4});
        set_thread_count(threads);
        const bool ok = a.report.epoch_loss == b.report.epoch_loss && a.model.tx == b.model.tx &&
                        a.model.rx == b.model.rx && ca.points[0].errors == cb.points[0].errors &&
                        nlos_channel(s.geometry, RngSeed{5}) == nlos_channel(s.geometry, RngSeed{5});
        check(ok, "seeded determinism");
    }
    return {failed.empty(), failed.empty() ? "all property checks hold"
                                           : fmt("%zu property check(s) failed, first: %s", failed.size(),
                                                 failed.front().c_str())};
}

Verdict c10()
{
    BaselineConfig b;
    b.rician.k_factor = 1.0;
    const double snr = 5.0;
    std::vector<double> ser;
    for (std::size_t n : {1u, 9u, 81u})
    {
        b.n_rf = n;
        const SerPoint p = baseline_mrt_qam(b, {snr}, 200000, RngSeed{10}).points[0];
        note(fmt("MRT n_rf=%2zu at %.0f dB: SER %.5f +- %.5f", n, snr, p.ser, p.ci_halfwidth));
        ser.push_back(p.ser);
    }
    const bool mono = ser[0] > ser[1] && ser[1] > ser[2];

    double worst = 0.0;
    std::size_t used = 0;
    for (double db = 8.0; db <= 22.0; db += 1.0)
    {
        const double want = qam_ser_closed_form(db_to_linear(db));
        if (want < 1e-3 || want > 1e-1)
            continue;
        const std::size_t trials = std::max<std::size_t>(200000, static_cast<std::size_t>(2000.0 / want));
        const SerPoint p = qam16_awgn_ser(db, trials, RngSeed{11});
        const double rel = std::abs(p.ser - want) / want;
        note(fmt("AWGN 16-QAM Es/N0 %4.1f dB: simulated %.5f, closed form %.5f, relative gap %.3f", db, p.ser, want,
                 rel));
        worst = std::max(worst, rel);
        ++used;
    }
    const bool ok = mono && used >= 3 && worst <= 0.10;
    return {ok, fmt("MRT SER %.4f > %.4f > %.4f %s; AWGN worst relative gap %.3f over %zu points", ser[0], ser[1],
                    ser[2], mono ? "(monotone)" : "(NOT monotone)", worst, used)};
}

} // namespace

int main(int argc, char **argv)
{
    int only = 0;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc)
            only = std::atoi(argv[++i]);
    if (!std::getenv("DIFFLINK_THREADS"))
        set_thread_count(std::max(1u, std::thread::hardware_concurrency()));

    const std::vector<std::function<Verdict()>> all{c1, c2, c3, c4, c5, c6, c7, c8, c9, c10};
    if (only < 0 || only > static_cast<int>(all.size()))
    {
        std::cerr << "unknown criterion " << only << "\n";
        return 2;
    }
    bool ok = true;
    for (int k = 1; k <= static_cast<int>(all.size()); ++k)
    {
        if (only && k != only)
            continue;
        std::cout << "criterion " << k << ":" << std::endl;
        Verdict v;
        try
        {
            v = all[k - 1]();
        }
        catch (const std::exception &e)
        {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << k << ": " << v.detail << std::endl;
        ok = ok && v.pass;
    }
    return ok ? 0 : 1;
}
