#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dsc/cdr.hpp"

using namespace dsc;
using namespace dsc::cdr;

namespace {

grid::PowerSystem load39() { return grid::load_system(std::string(DSC_DATA_DIR) + "/ieee39"); }

scen::ResilienceRecord record_with(double rhat, uint64_t id = 0) {
    scen::ResilienceRecord r;
    r.id = id;
    r.rhat = rhat;
    r.k = 1.0;
    r.tau = rhat;
    return r;
}

}  // namespace

TEST_CASE("demand-response labeling") {
    CHECK(label_dr_class(0.3, 0.48) == 1);
    CHECK(label_dr_class(0.6, 0.48) == 0);
    CHECK(label_dr_class(0.48, 0.48) == 1);  // threshold inclusive

    // threshold monotone: smaller Rhat can never be class 0 when larger is class 1
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        double a = rng.uniform(0.04, 0.6), b = rng.uniform(0.04, 0.6);
        if (a > b) std::swap(a, b);
        if (label_dr_class(b, 0.48) == 1) CHECK(label_dr_class(a, 0.48) == 1);
    }
}

TEST_CASE("dispatch arithmetic follows the selector") {
    grid::PowerSystem sys = load39();
    CdrPolicy policy;
    policy.asr = 0.48;
    policy.critical_lines = {26, 27};
    policy.critical_load_buses = {16, 17, 19, 21};

    double critical_mw = 0, total_mw = 0;
    std::set<int> crit(policy.critical_load_buses.begin(), policy.critical_load_buses.end());
    for (const auto& ld : sys.loads) {
        total_mw += ld.p * sys.base_mva;
        if (crit.count(ld.bus)) critical_mw += ld.p * sys.base_mva;
    }

    SUBCASE("class 1 sheds only the critical set") {
        DrDispatch d = dispatch_dr(sys, policy, record_with(0.3), 0.05, 0.02);
        CHECK(d.label == 1);
        CHECK(d.x1 == 1);
        CHECK(d.x2 == 0);
        CHECK(d.x1 + d.x2 == 1);
        CHECK(d.affected_mw == doctest::Approx(critical_mw).epsilon(1e-12));
        CHECK(d.shed_mw == doctest::Approx(0.05 * critical_mw).epsilon(1e-12));
        double redistributed = 0;
        for (auto& [gen, mw] : d.redistribution) redistributed += mw;
        CHECK(redistributed == doctest::Approx(d.shed_mw).epsilon(1e-9));
    }
    SUBCASE("class 0 sheds only the noncritical set") {
        DrDispatch d = dispatch_dr(sys, policy, record_with(0.55), 0.05, 0.02);
        CHECK(d.label == 0);
        CHECK(d.x1 == 0);
        CHECK(d.x2 == 1);
        CHECK(d.affected_mw == doctest::Approx(total_mw - critical_mw).epsilon(1e-12));
        CHECK(d.shed_mw == doctest::Approx(0.02 * (total_mw - critical_mw)).epsilon(1e-12));
    }
    SUBCASE("zero fraction is a no-op") {
        DrDispatch d = dispatch_dr(sys, policy, record_with(0.3), 0.0, 0.0);
        CHECK(d.shed_mw == 0.0);
        CHECK(d.dr_effective == 0.0);
    }
    SUBCASE("fractions outside the unit interval rejected") {
        CHECK_THROWS_AS(dispatch_dr(sys, policy, record_with(0.3), 1.2, 0.0), ValidationError);
        CHECK_THROWS_AS(dispatch_dr(sys, policy, record_with(0.3), 0.1, -0.1), ValidationError);
    }
    SUBCASE("conservation holds over random dispatches") {
        Rng rng(11);
        for (int i = 0; i < 300; ++i) {
            double rhat = rng.uniform(0.04, 0.6);
            double f1 = rng.uniform(0, 1), f2 = rng.uniform(0, 1);
            DrDispatch d = dispatch_dr(sys, policy, record_with(rhat), f1, f2);
            CHECK(d.x1 + d.x2 == 1);
            CHECK(std::fabs(d.shed_mw - d.fraction * d.affected_mw) < 1e-9);
        }
    }
}

TEST_CASE("aggregation is the arithmetic mean of effective participation") {
    grid::PowerSystem sys = load39();
    CdrPolicy policy;
    policy.asr = 0.48;
    policy.critical_load_buses = {16};

    std::vector<DrDispatch> ds;
    ds.push_back(dispatch_dr(sys, policy, record_with(0.3), 0.05, 0.0));
    ds.push_back(dispatch_dr(sys, policy, record_with(0.2), 0.05, 0.0));
    CHECK(aggregate_cdr(ds) == doctest::Approx(0.05));

    ds.clear();
    ds.push_back(dispatch_dr(sys, policy, record_with(0.3), 0.1, 0.0));
    ds.push_back(dispatch_dr(sys, policy, record_with(0.55), 0.1, 0.0));  // class 0, DR2 = 0
    CHECK(aggregate_cdr(ds) == doctest::Approx(0.05));

    ds.clear();
    ds.push_back(dispatch_dr(sys, policy, record_with(0.3), 0.0, 0.0));
    CHECK(aggregate_cdr(ds) == 0.0);

    std::vector<DrDispatch> empty;
    CHECK_THROWS_AS(aggregate_cdr(empty), ValidationError);
}

TEST_CASE("policy curve reproduces the published SFI trajectory") {
    auto curve = evaluate_policy(0.48, risk::LoadingBounds{});
    REQUIRE(curve.size() == 11);
    CHECK(curve[0].sfi == doctest::Approx(0.875).epsilon(1e-3));
    CHECK(curve[5].alpha == doctest::Approx(0.7125));
    CHECK(curve[5].beta == doctest::Approx(1.425));
    CHECK(curve[5].sfi == doctest::Approx(0.709).epsilon(1e-3));
    CHECK(curve[10].sfi == doctest::Approx(0.513).epsilon(1e-3));
    for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].sfi < curve[i - 1].sfi);
}

TEST_CASE("N-1 screening ranks unstable lines and derives critical loads") {
    grid::PowerSystem sys = load39();
    CdrPolicy policy = screen_critical(sys);

    CHECK(policy.screen.size() == 46);
    size_t unstable = 0, failed = 0;
    for (const auto& r : policy.screen) {
        failed += r.failed;
        unstable += r.tis;
    }
    CHECK(failed == 0);
    CHECK(unstable > 0);
    CHECK(policy.critical_lines.size() == std::min<size_t>(30, unstable));

    // ranking is by severity
    double prev = 1e18;
    for (int lid : policy.critical_lines) {
        double lm = 0;
        for (const auto& r : policy.screen)
            if (r.line == lid) lm = r.lambda_max;
        CHECK(lm <= prev + 1e-12);
        prev = lm;
    }
    // every critical load bus carries load and touches a critical line
    std::set<int> load_buses;
    for (const auto& ld : sys.loads) load_buses.insert(ld.bus);
    std::set<int> crit_lines(policy.critical_lines.begin(), policy.critical_lines.end());
    for (int b : policy.critical_load_buses) {
        CHECK(load_buses.count(b) == 1);
        bool touches = false;
        for (const auto& l : sys.lines)
            if (crit_lines.count(l.id) && (l.from == b || l.to == b)) touches = true;
        CHECK(touches);
    }
    // a stable line is never critical
    for (const auto& r : policy.screen)
        if (r.tis == 0) CHECK(crit_lines.count(r.line) == 0);
}
