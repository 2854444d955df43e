#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dsc/encoder.hpp"

using namespace dsc;
using namespace dsc::enc;

namespace {

TabularWindow make_window(const std::function<double(int r, int c)>& f) {
    TabularWindow w;
    w.data.resize(size_t(kRows) * kCols);
    for (int r = 0; r < kRows; ++r)
        for (int c = 0; c < kCols; ++c) w.at(r, c) = f(r, c);
    return w;
}

RowStats stats_of(const TabularWindow& w) {
    std::vector<TabularWindow> v{w};
    return compute_stats(v);
}

double map_sum(const IntensityMap& m) {
    double s = 0;
    for (double v : m.data) s += v;
    return s;
}

}  // namespace

TEST_CASE("intensity normalization") {
    SUBCASE("min-max maps a row onto [0, 1]") {
        auto w = make_window([](int, int c) { return c == 0 ? 0.0 : (c == 1 ? 5.0 : 10.0); });
        RowStats st;
        st.min.assign(kRows, 0.0);
        st.max.assign(kRows, 10.0);
        auto m = build_intensity_map(w, st);
        CHECK(m.at(0, 0) == 0.0);
        CHECK(m.at(0, 1) == 0.5);
        CHECK(m.at(0, 2) == 1.0);
    }
    SUBCASE("constant row maps to one half") {
        auto w = make_window([](int, int) { return 3.3; });
        auto m = build_intensity_map(w, stats_of(w));
        for (double v : m.data) CHECK(v == 0.5);
    }
    SUBCASE("values beyond the training stats clamp") {
        auto w = make_window([](int, int c) { return double(c); });
        RowStats st;
        st.min.assign(kRows, 10.0);
        st.max.assign(kRows, 20.0);
        auto m = build_intensity_map(w, st);
        CHECK(m.at(0, 0) == 0.0);    // below min
        CHECK(m.at(0, 249) == 1.0);  // above max
    }
    SUBCASE("identity on an already normalized row with unit stats") {
        auto w = make_window([](int, int c) { return double(c) / double(kCols - 1); });
        RowStats st;
        st.min.assign(kRows, 0.0);
        st.max.assign(kRows, 1.0);
        auto m = build_intensity_map(w, st);
        for (int c = 0; c < kCols; ++c)
            CHECK(m.at(3, c) == doctest::Approx(double(c) / double(kCols - 1)).epsilon(1e-12));
    }
    SUBCASE("diverged angles are clamped before stats") {
        auto w = make_window([](int, int c) { return c == 0 ? 1e9 : 0.0; });
        auto st = stats_of(w);
        CHECK(st.max[0] == kAngleClampDeg);
    }
}

TEST_CASE("gaussian blur") {
    auto impulse = make_window([](int r, int c) { return (r == 135 && c == 125) ? 1.0 : 0.0; });
    RowStats unit;
    unit.min.assign(kRows, 0.0);
    unit.max.assign(kRows, 1.0);

    SUBCASE("size 1 is the identity") {
        auto m = build_intensity_map(impulse, unit);
        auto b = blur(m, 1);
        CHECK(b.data == m.data);
    }
    SUBCASE("constant map unchanged for any size") {
        auto w = make_window([](int, int) { return 0.7; });
        auto m = build_intensity_map(w, unit);
        for (int s : {3, 5, 7, 9}) {
            auto b = blur(m, s);
            for (double v : b.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));
        }
    }
    SUBCASE("interior impulse spreads but keeps its mass") {
        auto m = build_intensity_map(impulse, unit);
        auto b = blur(m, 3);
        CHECK(b.at(135, 125) < 1.0);
        CHECK(b.at(134, 125) > 0.0);
        CHECK(map_sum(b) == doctest::Approx(map_sum(m)).epsilon(1e-9));
    }
    SUBCASE("mean preserved on a constant map under reflection") {
        auto w = make_window([](int, int) { return 0.31; });
        auto m = build_intensity_map(w, unit);
        for (int s : {3, 9})
            CHECK(map_sum(blur(m, s)) / double(m.data.size()) ==
                  doctest::Approx(0.31).epsilon(1e-6));
    }
    SUBCASE("even size rejected") {
        auto m = build_intensity_map(impulse, unit);
        CHECK_THROWS_AS(blur(m, 4), ValidationError);
        CHECK_THROWS_AS(blur(m, 0), ValidationError);
    }
}

TEST_CASE("feature volume") {
    RowStats unit;
    unit.min.assign(kRows, 0.0);
    unit.max.assign(kRows, 1.0);

    SUBCASE("shape is 5 x 270 x 250 and channel 0 is unblurred") {
        auto w = make_window([](int r, int c) { return (r * 7 + c * 3) % 11 / 10.0; });
        auto v = build_volume(w, unit);
        CHECK(v.data.size() == size_t(5) * 270 * 250);
        auto m = build_intensity_map(w, unit);
        for (int r = 0; r < kRows; ++r)
            for (int c = 0; c < kCols; ++c)
                CHECK(v.at(0, r, c) == doctest::Approx(m.at(r, c)).epsilon(1e-7));
    }
    SUBCASE("constant window gives constant half everywhere") {
        auto w = make_window([](int, int) { return 9.0; });
        auto v = build_volume(w, stats_of(w));
        for (float x : v.data) CHECK(x == doctest::Approx(0.5).epsilon(1e-7));
    }
    SUBCASE("planted vertical band survives every channel with softening edges") {
        auto w = make_window([](int, int c) { return c >= 200 ? 1.0 : 0.0; });
        auto v = build_volume(w, unit);
        for (int ch = 0; ch < 5; ++ch) {
            CHECK(v.at(ch, 100, 230) == doctest::Approx(1.0).epsilon(1e-6));
            CHECK(v.at(ch, 100, 100) == doctest::Approx(0.0).epsilon(1e-6));
        }
        // edge sharpness decreases with kernel size
        double prev_edge = 2.0;
        for (int ch = 0; ch < 5; ++ch) {
            double edge = v.at(ch, 100, 200) - v.at(ch, 100, 199);
            CHECK(edge <= prev_edge + 1e-9);
            prev_edge = edge;
        }
    }
    SUBCASE("deterministic") {
        auto w = make_window([](int r, int c) { return std::sin(r * 0.1) + std::cos(c * 0.2); });
        auto st = stats_of(w);
        auto a = build_volume(w, st);
        auto b = build_volume(w, st);
        CHECK(a.data == b.data);
    }
}
