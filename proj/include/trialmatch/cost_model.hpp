#pragma once

#include <cstdint>
#include <string>

namespace trialmatch::cost {

struct ThroughputProfile {
    double input_speed = 0.0;   ///< tokens / second
    double output_speed = 0.0;  ///< tokens / second
    double hourly_rate = 0.0;   ///< currency / hour

    void validate() const;
};

struct TokenUsage {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
};

/// in / (in_speed * 3600) + out / (out_speed * 3600).
double runtime_hours(const TokenUsage& usage, const ThroughputProfile& profile);

double self_hosted_cost(const TokenUsage& usage, const ThroughputProfile& profile);

/// Linear per-1k-token pricing.
double api_cost(const TokenUsage& usage, double price_per_1k_in, double price_per_1k_out);

/// Throws InputError when n_pairs < 1.
double per_pair_cost(double total, long long n_pairs);

/// Half-up rounding to cents, for display only.
double round_cents(double amount);

struct CostReport {
    std::string method;  ///< "self-hosted" or "api"
    double total_cost = 0.0;
    double per_pair_cost = 0.0;
    double runtime_hours = 0.0;  ///< 0 for API pricing
    TokenUsage usage;
    long long n_pairs = 0;
    std::string assumptions;
};

/// {method, total_cost, per_pair_cost, runtime_hours, assumptions, ...}.
std::string report_to_json(const CostReport& report);

}  // namespace trialmatch::cost
