#include <catch_amalgamated.hpp>

#include "difflink.hpp"
#include "oracles.hpp"

#include <sstream>

using namespace difflink;
using Catch::Approx;

namespace
{
ExperimentSetup tiny_setup()
{
    ExperimentSetup s;
    s.geometry.n_x = s.geometry.n_z = 8;
    s.geometry.l_tx = s.geometry.l_rx = 2;
    s.train.epochs = 12;
    s.train.dataset_size = 512;
    s.train.calibration_batch = 128;
    s.train.snr_db = 10.0;
    return s;
}
} // namespace

TEST_CASE("snr grids", "[evaluation][grid]")
{
    const auto g = parse_snr_grid("-32:4:0");
    REQUIRE(g.size() == 9);
    CHECK(g.front() == -32.0);
    CHECK(g.back() == 0.0);
    CHECK(g[3] == -20.0);
    CHECK(parse_snr_grid("-5") == std::vector<double>{-5.0});
    CHECK(parse_snr_grid("0:3:10").size() == 4);
    CHECK_THROWS_AS(parse_snr_grid("0:0:10"), ConfigError);
    CHECK_THROWS_AS(parse_snr_grid("10:1:0"), ConfigError);
    CHECK_THROWS_AS(parse_snr_grid("a:b"), ConfigError);
    CHECK_THROWS_AS(parse_snr_grid(""), ConfigError);
}

TEST_CASE("statistics helpers", "[evaluation][stats]")
{
    CHECK(wilson_halfwidth(50, 100) == Approx(0.096170).epsilon(1e-4));
    CHECK(wilson_halfwidth(0, 10000) > 0.0);
    CHECK(wilson_halfwidth(0, 10000) < 4e-4);
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK_THROWS(median({}));
    CHECK(min_trials(1e-3) == 100000);
    CHECK(min_trials(1e-9) == 1000000);
    CHECK(separated_below(0.01, 0.002, 0.05, 0.01));
    CHECK(!separated_below(0.01, 0.02, 0.05, 0.03));
    CHECK(q_function(0.0) == Approx(0.5));
    CHECK(q_function(1.0) == Approx(0.158655).epsilon(1e-5));
}

TEST_CASE("16-QAM constellation", "[evaluation][qam]")
{
    double e = 0.0;
    for (std::size_t k = 0; k < 16; ++k)
    {
        e += std::norm(qam16_point(k)) / 16.0;
        REQUIRE(qam16_detect(qam16_point(k)) == k);
        REQUIRE(qam16_detect(qam16_point(k) + cplx(0.1, -0.1)) == k);
    }
    CHECK(e == Approx(1.0));
    for (double db : {0.0, 8.0, 14.0, 20.0})
    {
        const double x = db_to_linear(db);
        CHECK(qam_ser_closed_form(x) == Approx(oracle::qam16_ser(x)).epsilon(1e-12));
    }
}

TEST_CASE("awgn 16-QAM simulation tracks the closed form", "[evaluation][qam]")
{
    const SerPoint p = qam16_awgn_ser(14.0, 100000, RngSeed{1});
    const double want = oracle::qam16_ser(db_to_linear(14.0));
    CHECK(std::abs(p.ser - want) < 3.0 * p.ci_halfwidth);
    CHECK(qam16_awgn_ser(14.0, 1000, RngSeed{1}).errors == qam16_awgn_ser(14.0, 1000, RngSeed{1}).errors);
}

TEST_CASE("mrt baseline", "[evaluation][baseline]")
{
    BaselineConfig c;
    c.n_rf = 1;
    c.rician.k_factor = 1e12; // a single NLoS tap can cancel the LoS term, so no deep fades here
    const SerCurve hi = baseline_mrt_qam(c, {60.0}, 2000, RngSeed{2});
    CHECK(hi.points[0].ser == 0.0);
    c.n_rf = 10;
    CHECK_THROWS_AS(baseline_mrt_qam(c, {0.0}, 10, RngSeed{2}), ConfigError);
    c.n_rf = 9;
    CHECK_THROWS_AS(baseline_mrt_qam(c, {0.0}, 0, RngSeed{2}), ConfigError);
    const SerCurve a = baseline_mrt_qam(c, {5.0, 10.0}, 3000, RngSeed{3});
    const SerCurve b = baseline_mrt_qam(c, {5.0, 10.0}, 3000, RngSeed{3});
    CHECK(a.points[0].errors == b.points[0].errors);
    CHECK(a.points[1].ser <= a.points[0].ser);
}

TEST_CASE("monte-carlo SER of a transceiver", "[evaluation][ser]")
{
    ExperimentSetup s = tiny_setup();

    SECTION("untrained model at very low SNR guesses")
    {
        Transceiver t(s.geometry, s.scheme);
        std::mt19937_64 eng(4);
        t.tx = init_phases(2, 8, 8, eng, InitScheme::uniform);
        t.rx = init_phases(2, 8, 8, eng, InitScheme::uniform);
        t.reference_power = measure_reference_power(t, ChannelModel(s.geometry, s.channel), RngSeed{4});
        const SerCurve c = measure_ser(t, {-60.0}, 20000, s.channel, RngSeed{4});
        CHECK(c.points[0].ser == Approx(1.0 - 1.0 / 16.0).margin(3.0 * c.points[0].ci_halfwidth));
        CHECK_THROWS_AS(measure_ser(t, {0.0}, 0, s.channel, RngSeed{4}), ConfigError);
    }
    SECTION("trained model in the noiseless limit")
    {
        s.geometry.l_tx = s.geometry.l_rx = 4;
        s.train.epochs = 40;
        s.train.learning_rate = 0.1;
        const TrainedModel tm = train_model(s, RngSeed{5});
        CHECK(tm.report.final_loss() < 0.5);
        const SerCurve c = measure_ser(tm.model, {200.0}, 2000, s.channel, RngSeed{5});
        CHECK(c.points[0].ser == 0.0);
    }
    SECTION("results do not depend on the thread count")
    {
        s.channel.redraw = RedrawPolicy::per_batch;
        s.train.epochs = 2;
        const TrainedModel tm = train_model(s, RngSeed{6});
        const SerCurve a = measure_ser(tm.model, {-10.0, 0.0}, 3000, s.channel, RngSeed{6});
        set_thread_count(4);
        const SerCurve b = measure_ser(tm.model, {-10.0, 0.0}, 3000, s.channel, RngSeed{6});
        set_thread_count(1);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(a.points[i].errors == b.points[i].errors);
        CHECK(a.at(0.0).sigma2 == Approx(tm.model.reference_power));
        CHECK_THROWS(a.at(5.0));
    }
}

TEST_CASE("sweeps are deterministic per seed", "[evaluation][sweep]")
{
    ExperimentSetup s = tiny_setup();
    s.train.epochs = 2;
    const auto a = sweep_channel(ChannelSweepKind::rank, {1.0, 4.0}, {0.0}, s, {7}, 500);
    const auto b = sweep_channel(ChannelSweepKind::rank, {1.0, 4.0}, {0.0}, s, {7}, 500);
    REQUIRE(a.size() == 2);
    for (std::size_t i = 0; i < 2; ++i)
    {
        CHECK(a[i].label == b[i].label);
        CHECK(a[i].final_loss == b[i].final_loss);
        CHECK(a[i].curve.points[0].errors == b[i].curve.points[0].errors);
    }
    const auto cap = sweep_capacity({1, 2}, {4, 8}, s, {1}, 0.0, 0);
    CHECK(cap.size() == 4);
    CHECK(cap[3].layers == 2);
    CHECK(cap[3].elements == 8);
    const auto snr = sweep_training_snr({-10.0, 0.0}, {0.0}, s, {1, 2}, 100);
    CHECK(snr.size() == 4);
}

TEST_CASE("ser csv rows", "[evaluation][io]")
{
    SerCurve c;
    c.points.push_back({-4.0, 0.25, 25, 100, 0.085, 1.0});
    std::ostringstream os;
    write_ser_csv_header(os);
    write_ser_rows(os, "abc", c);
    CHECK(os.str() == "config_hash,snr_db,ser,trials,ci_halfwidth\nabc,-4,0.25,100,0.085000000000000006\n");
}
