#include <catch_amalgamated.hpp>

#include "difflink.hpp"

#include <set>

using namespace difflink;
using Catch::Approx;

TEST_CASE("flat_index fixed values", "[core][index]")
{
    CHECK(flat_index(0, 0, 8, 8) == 0);
    CHECK(flat_index(3, 2, 8, 8) == 19);
    CHECK(flat_index(7, 0, 8, 3) == 7);
    CHECK_THROWS_AS(flat_index(8, 0, 8, 8), std::out_of_range);
    CHECK_THROWS_AS(flat_index(0, 8, 8, 8), std::out_of_range);
    CHECK_THROWS_AS(grid_coords(64, 8, 8), std::out_of_range);
}

TEST_CASE("flat_index is a bijection onto [0, N)", "[core][index][property]")
{
    for (std::size_t nx = 1; nx <= 64; nx += 7)
        for (std::size_t nz = 1; nz <= 64; nz += 9)
        {
            std::vector<std::uint8_t> hit(nx * nz, 0);
            for (std::size_t iz = 0; iz < nz; ++iz)
                for (std::size_t ix = 0; ix < nx; ++ix)
                {
                    const std::size_t n = flat_index(ix, iz, nx, nz);
                    REQUIRE(n < nx * nz);
                    REQUIRE(hit[n] == 0);
                    hit[n] = 1;
                    const auto [bx, bz] = grid_coords(n, nx, nz);
                    REQUIRE(bx == ix);
                    REQUIRE(bz == iz);
                }
        }
    // the full 64x64 grid
    std::set<std::size_t> all;
    for (std::size_t iz = 0; iz < 64; ++iz)
        for (std::size_t ix = 0; ix < 64; ++ix)
            all.insert(flat_index(ix, iz, 64, 64));
    CHECK(all.size() == 4096);
    CHECK(*all.rbegin() == 4095);
}

TEST_CASE("field_power examples", "[core]")
{
    ComplexField z(4, 4);
    CHECK(field_power(z) == 0.0);

    ComplexField one(4, 4);
    one(1, 2) = cplx(0.0, -2.0);
    CHECK(field_power(one) == Approx(4.0));

    ComplexField u(4, 4, std::vector<cplx>(16, cplx(0.5, 0.0)));
    CHECK(field_power(u) == Approx(4.0));
}

TEST_CASE("ComplexField shape checks", "[core]")
{
    CHECK_THROWS_AS(ComplexField(3, 3, std::vector<cplx>(8)), std::invalid_argument);
    ComplexField a(2, 3), b(3, 2);
    CHECK_THROWS(a += b);
    CHECK(relative_l2(a, a) == 0.0);
}

TEST_CASE("phase layers have unit-modulus coefficients", "[core][property]")
{
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    PhaseLayer l(9, 5);
    for (auto &p : l.phases)
        p = u(eng);
    for (auto c : l.coefficients())
        REQUIRE(std::abs(c) == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("wrap_phase lands in (-pi, pi]", "[core]")
{
    CHECK(wrap_phase(0.0) == 0.0);
    CHECK(wrap_phase(pi) == Approx(pi));
    CHECK(wrap_phase(-pi) == Approx(pi));
    CHECK(wrap_phase(3.0 * pi + 0.1) == Approx(-pi + 0.1));
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int i = 0; i < 1000; ++i)
    {
        const double a = u(eng);
        const double w = wrap_phase(a);
        REQUIRE(w > -pi);
        REQUIRE(w <= pi);
        REQUIRE(std::abs(std::polar(1.0, a) - std::polar(1.0, w)) < 1e-12);
    }
}

TEST_CASE("geometry and modulation validation", "[core][config]")
{
    Geometry g;
    CHECK_NOTHROW(g.validate());
    Geometry bad = g;
    bad.d_x = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = g;
    bad.l_rx = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    ModulationScheme s{4, 4};
    CHECK(s.bits() == 4);
    g.n_x = 10;
    try
    {
        s.validate(g);
        FAIL("n_x = 10 accepted with m_x = 4");
    }
    catch (const ConfigError &e)
    {
        CHECK(e.field() == "modulation.m_x");
    }
    g.n_x = 12;
    CHECK_THROWS_AS((ModulationScheme{3, 4}.validate(g)), ConfigError); // M = 12
}

TEST_CASE("symbol blocks tile the aperture", "[core][property]")
{
    Geometry g;
    g.n_x = 8;
    g.n_z = 12;
    ModulationScheme s{2, 4};
    s.validate(g);
    const auto map = subarray_map(s, g);
    std::vector<std::size_t> count(s.symbols(), 0);
    for (auto m : map)
        ++count[m];
    for (auto c : count)
        CHECK(c == s.sub_cells(g));
    // symbol 5 -> block (1, 2)
    CHECK(s.block(5) == std::pair<std::size_t, std::size_t>{1, 2});
    CHECK(s.symbol_at(4, 6, g) == 5);

    SymbolBatch b{{5, 0}, s.symbols()};
    const auto q = b.one_hot(0);
    CHECK(q[5] == 1.0);
    CHECK(std::accumulate(q.begin(), q.end(), 0.0) == 1.0);
    const auto qb = b.block_indicator(0, s);
    CHECK(qb[2 * s.m_x + 1] == 1.0);
    const auto mask = b.mask(0, s, g);
    CHECK(std::accumulate(mask.begin(), mask.end(), std::size_t{0}) == s.sub_cells(g));
}

TEST_CASE("seed derivation is deterministic and stream-separated", "[core][rng][property]")
{
    RngSeed a{42}, b{42}, c{43};
    CHECK(a.derive(Stream::noise, 1, 2, 3) == b.derive(Stream::noise, 1, 2, 3));
    CHECK(a.derive(Stream::noise, 1, 2, 3) != c.derive(Stream::noise, 1, 2, 3));
    CHECK(a.derive(Stream::noise, 1) != a.derive(Stream::channel, 1));
    CHECK(a.derive(Stream::noise, 1, 0) != a.derive(Stream::noise, 0, 1));
    auto e1 = a.engine(Stream::data), e2 = b.engine(Stream::data);
    for (int i = 0; i < 100; ++i)
        REQUIRE(e1() == e2());
    CHECK(a.child(1) == b.child(1));
    CHECK(!(a.child(1) == a.child(2)));
}

TEST_CASE("complex_normal has the requested variance", "[core][rng]")
{
    std::mt19937_64 eng(5);
    const auto v = complex_normal_vector(eng, 40000, 2.5);
    double p = 0.0;
    cplx mean{};
    for (auto x : v)
    {
        p += std::norm(x);
        mean += x;
    }
    CHECK(p / 40000.0 == Approx(2.5).epsilon(0.03));
    CHECK(std::abs(mean / 40000.0) < 0.03);
}

TEST_CASE("fft round trip", "[core][fft]")
{
    Fft2d f(6, 10);
    std::mt19937_64 eng(9);
    const auto x = complex_normal_vector(eng, 60);
    auto y = x;
    f.forward(y.data());
    f.inverse(y.data());
    for (std::size_t i = 0; i < x.size(); ++i)
        REQUIRE(std::abs(y[i] / 60.0 - x[i]) < 1e-12);
}

TEST_CASE("parallel_for covers every index once and rethrows", "[core][parallel]")
{
    set_thread_count(4);
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    CHECK_THROWS_AS(parallel_for(100, [](std::size_t i) {
                        if (i == 57)
                            throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
    set_thread_count(1);
}
