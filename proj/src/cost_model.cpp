#include "trialmatch/cost_model.hpp"

#include "trialmatch/error.hpp"

#include <json.hpp>

#include <cmath>

namespace trialmatch::cost {

void ThroughputProfile::validate() const {
    if (!(input_speed > 0.0) || !(output_speed > 0.0)) {
        throw InputError("throughput speeds must be positive");
    }
    if (!(hourly_rate >= 0.0)) throw InputError("hourly rate must be non-negative");
}

double runtime_hours(const TokenUsage& usage, const ThroughputProfile& profile) {
    profile.validate();
    return static_cast<double>(usage.input_tokens) / (profile.input_speed * 3600.0) +
           static_cast<double>(usage.output_tokens) / (profile.output_speed * 3600.0);
}

double self_hosted_cost(const TokenUsage& usage, const ThroughputProfile& profile) {
    return runtime_hours(usage, profile) * profile.hourly_rate;
}

double api_cost(const TokenUsage& usage, double price_per_1k_in, double price_per_1k_out) {
    if (price_per_1k_in < 0.0 || price_per_1k_out < 0.0) throw InputError("prices must be non-negative");
    return static_cast<double>(usage.input_tokens) / 1000.0 * price_per_1k_in +
           static_cast<double>(usage.output_tokens) / 1000.0 * price_per_1k_out;
}

double per_pair_cost(double total, long long n_pairs) {
    if (n_pairs < 1) throw InputError("per-pair cost needs at least one pair");
    return total / static_cast<double>(n_pairs);
}

double round_cents(double amount) {
    // The epsilon keeps values such as 0.125 (stored as 0.12499999...) rounding up.
    return std::floor(amount * 100.0 + 0.5 + 1e-9) / 100.0;
}

std::string report_to_json(const CostReport& report) {
    nlohmann::ordered_json doc;
    doc["method"] = report.method;
    doc["total_cost"] = report.total_cost;
    doc["per_pair_cost"] = report.per_pair_cost;
    doc["per_pair_cost_display"] = round_cents(report.per_pair_cost);
    doc["runtime_hours"] = report.runtime_hours;
    doc["input_tokens"] = report.usage.input_tokens;
    doc["output_tokens"] = report.usage.output_tokens;
    doc["n_pairs"] = report.n_pairs;
    doc["assumptions"] = report.assumptions;
    return doc.dump(2) + "\n";
}

}  // namespace trialmatch::cost
