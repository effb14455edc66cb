#include <doctest.h>

#include "oracles.hpp"
#include "properties.hpp"

TEST_SUITE("properties") {
    TEST_CASE("transformation algebra on 500 random tables") {
        const props::Report r = props::check_algebra(500, 11);
        INFO(r.firstFailure);
        CHECK(r.ok());
        CHECK(r.checks > 1000);
    }

    TEST_CASE("environment invariants on 300 random episodes") {
        const props::EnvReport r = props::check_env(300, 12);
        INFO(r.firstFailure);
        CHECK(r.ok());
        CHECK(r.maxLength <= 200);
        CHECK(r.maxTelescopeError <= 1e-12);
        CHECK(r.doubleWrites == 0);
        CHECK(r.nondeterministic == 0);
    }
}

TEST_SUITE("nn") {
    TEST_CASE("finite differences agree on every op and module") {
        const props::GradReport r = props::check_gradients(3);
        for (const auto& [name, err] : r.errors) {
            INFO(name);
            CHECK(err < 1e-4);
        }
        CHECK(r.errors.size() >= 30);
    }

    TEST_CASE("fused LSTM matches the unrolled cell composition") { CHECK(props::lstm_fused_vs_unrolled(4) < 1e-12); }

    TEST_CASE("curiosity predictor fits its training states") {
        const props::RndReport r = props::check_rnd(2, 500, 5);
        for (double ratio : r.ratios) CHECK(ratio <= 0.10);
    }
}
