#include <catch_amalgamated.hpp>

#include "difflink.hpp"

#include <sstream>

using namespace difflink;
using Catch::Approx;

TEST_CASE("bench records both engines per size", "[bench]")
{
    BenchOptions o;
    o.reps = 5;
    o.warmup = 1;
    const BenchResult r = bench_propagation({4, 8, 12}, o, RngSeed{1});
    REQUIRE(r.records.size() == 6);
    CHECK(r.rel_error.size() == 3);
    CHECK(r.correct);
    for (const auto &rec : r.records)
    {
        CHECK(rec.median_ns > 0.0);
        CHECK(rec.iqr_ns >= 0.0);
        CHECK(rec.reps == 5);
        CHECK(rec.padding == (rec.engine == Engine::asm_fft ? 2.0 : 0.0));
    }
    CHECK(find_record(r.records, 8, Engine::rsf_dense).n == 8);
    CHECK_THROWS(find_record(r.records, 16, Engine::asm_fft));

    std::ostringstream os;
    write_bench_csv(os, r.records);
    std::string first;
    std::istringstream is(os.str());
    std::getline(is, first);
    CHECK(first == "n,engine,median_ns,iqr_ns,setup_ns,padding");
    std::size_t lines = 0;
    for (std::string l; std::getline(is, l);)
        ++lines;
    CHECK(lines == 6);
}

TEST_CASE("bench flags an engine mismatch", "[bench]")
{
    BenchOptions o;
    o.reps = 1;
    o.warmup = 0;
    o.tolerance = 1e-9;
    CHECK(!bench_propagation({8}, o, RngSeed{1}).correct);
}

TEST_CASE("bench input checks", "[bench]")
{
    BenchOptions o;
    CHECK_THROWS(bench_propagation({8, 4}, o, RngSeed{1}));
    o.reps = 0;
    CHECK_THROWS_AS(bench_propagation({4}, o, RngSeed{1}), ConfigError);
}

TEST_CASE("log-log slope", "[bench]")
{
    std::vector<BenchRecord> rows;
    for (std::size_t n : {8u, 16u, 32u, 64u})
    {
        BenchRecord a;
        a.n = n;
        a.engine = Engine::rsf_dense;
        a.median_ns = 3.0 * std::pow(double(n * n), 2.0);
        BenchRecord b = a;
        b.engine = Engine::asm_fft;
        b.median_ns = 7.0 * double(n * n) * std::log(double(n * n));
        rows.push_back(a);
        rows.push_back(b);
    }
    CHECK(loglog_slope(rows, Engine::rsf_dense) == Approx(2.0));
    const double s = loglog_slope(rows, Engine::asm_fft);
    CHECK(s > 1.0);
    CHECK(s < 1.3);
    CHECK_THROWS(loglog_slope({rows[0]}, Engine::rsf_dense));
}
