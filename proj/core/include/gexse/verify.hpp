#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gexse/tensor.hpp"

namespace gexse::verify {

/// Outcome of one self-check: `value` is compared against `threshold`
/// (pass when value < threshold unless stated otherwise in `detail`).
struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct FiniteDifferenceResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Central differences (step h) against the reverse-mode gradient of
/// `loss_fn` for the inputs that require grad. Relative error is
/// |a-n| / max(|a|, |n|, 1e-4). `max_elements` > 0 subsamples each input.
FiniteDifferenceResult finite_difference_check(const std::function<Tensor(std::vector<Tensor>&)>& loss_fn,
                                               std::vector<Tensor>& inputs, double h = 1e-5,
                                               std::size_t max_elements = 0);

/// Every differentiable op on `shapes_per_op` random shapes, threshold 1e-4.
std::vector<CheckResult> gradcheck_suite(std::uint64_t seed, std::size_t shapes_per_op = 10);

/// real_fft against an O(n^2) DFT for n in {4,16,90,128,256} (< 1e-8),
/// Parseval (< 1e-8) and inverse round trip (< 1e-9).
std::vector<CheckResult> fft_suite(std::uint64_t seed);

/// Metric definitions against hand-evaluated confusion matrices.
std::vector<CheckResult> metrics_suite();

bool all_passed(const std::vector<CheckResult>& results);
std::string format_result(const CheckResult& r);

}  // namespace gexse::verify
