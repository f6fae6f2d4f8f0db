/**
 * @file test_cost_model.cpp
 * @brief Runtime, self-hosted and API cost arithmetic.
 */

#include "trialmatch/cost_model.hpp"
#include "trialmatch/error.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

using namespace trialmatch;
using namespace trialmatch::cost;

TEST(RuntimeHours, BothTerms) {
    EXPECT_NEAR(runtime_hours({3'600'000, 360'000}, {1000, 100, 0}), 2.0, 1e-12);
}

TEST(RuntimeHours, ZeroUsage) {
    EXPECT_EQ(runtime_hours({0, 0}, {1000, 100, 0}), 0.0);
}

TEST(RuntimeHours, InputTermOnly) {
    EXPECT_NEAR(runtime_hours({3600, 0}, {1, 1, 0}), 1.0, 1e-12);
}

TEST(RuntimeHours, ZeroSpeedIsAnError) {
    EXPECT_THROW(runtime_hours({1, 1}, {0, 100, 1}), InputError);
    EXPECT_THROW(runtime_hours({1, 1}, {100, 0, 1}), InputError);
    EXPECT_THROW(runtime_hours({1, 1}, {100, 100, -1}), InputError);
}

TEST(RuntimeHours, LinearInTokens) {
    const ThroughputProfile p{750, 42, 3};
    const double base = runtime_hours({12345, 678}, p);
    EXPECT_NEAR(runtime_hours({24690, 1356}, p), 2.0 * base, 1e-12);
}

TEST(SelfHostedCost, HoursTimesRate) {
    // 2 hours at 10 per hour.
    EXPECT_NEAR(self_hosted_cost({3'600'000, 360'000}, {1000, 100, 10}), 20.0, 1e-9);
    EXPECT_EQ(self_hosted_cost({0, 0}, {1000, 100, 10}), 0.0);
    // 0.5 hours at 4 per hour.
    EXPECT_NEAR(self_hosted_cost({1800, 0}, {1, 1, 4}), 2.0, 1e-12);
}

TEST(ApiCost, LinearPricing) {
    EXPECT_NEAR(api_cost({1000, 1000}, 0.01, 0.03), 0.04, 1e-12);
    EXPECT_EQ(api_cost({0, 0}, 0.01, 0.03), 0.0);
    EXPECT_NEAR(api_cost({500, 0}, 0.01, 0.03), 0.005, 1e-12);
    EXPECT_THROW(api_cost({1, 1}, -0.01, 0.03), InputError);
}

TEST(PerPairCost, QuotientsRoundToCents) {
    EXPECT_EQ(round_cents(per_pair_cost(170, 980)), 0.17);
    EXPECT_EQ(round_cents(per_pair_cost(6055, 980)), 6.18);
    EXPECT_EQ(per_pair_cost(0, 5), 0.0);
    EXPECT_THROW(per_pair_cost(10, 0), InputError);
}

TEST(PerPairCost, ReconstructsTotal) {
    for (double total : {0.0, 1.0, 170.0, 6055.0, 12345.67}) {
        for (long long n : {1LL, 3LL, 980LL}) EXPECT_NEAR(per_pair_cost(total, n) * n, total, 1e-9);
    }
}

TEST(RoundCents, HalfUp) {
    EXPECT_EQ(round_cents(0.125), 0.13);
    EXPECT_EQ(round_cents(0.005), 0.01);
    EXPECT_EQ(round_cents(0.0049), 0.0);
    EXPECT_EQ(round_cents(1.0 / 3.0), 0.33);
    EXPECT_EQ(round_cents(6.178571428), 6.18);
}

TEST(CostMonotonicity, NonDecreasingInEveryArgument) {
    const ThroughputProfile p{500, 50, 2};
    const double base = self_hosted_cost({1000, 100}, p);
    EXPECT_GE(self_hosted_cost({1001, 100}, p), base);
    EXPECT_GE(self_hosted_cost({1000, 101}, p), base);
    EXPECT_GE(self_hosted_cost({1000, 100}, {500, 50, 3}), base);
    EXPECT_GE(api_cost({1001, 100}, 0.01, 0.02), api_cost({1000, 100}, 0.01, 0.02));
    EXPECT_GE(api_cost({1000, 100}, 0.02, 0.02), api_cost({1000, 100}, 0.01, 0.02));
}

TEST(ReportJson, CarriesRequiredFields) {
    CostReport report;
    report.method = "self-hosted";
    report.total_cost = 170.0;
    report.per_pair_cost = 170.0 / 980.0;
    report.runtime_hours = 85.0;
    report.n_pairs = 980;
    report.assumptions = "whitespace tokens";
    const auto doc = nlohmann::json::parse(report_to_json(report));
    for (const char* key : {"method", "total_cost", "per_pair_cost", "runtime_hours", "assumptions"}) {
        EXPECT_TRUE(doc.contains(key)) << key;
    }
    EXPECT_EQ(doc["method"], "self-hosted");
    EXPECT_EQ(doc["per_pair_cost_display"].get<double>(), 0.17);
}
