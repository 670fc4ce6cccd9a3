#include "doctest.h"
#include "gexse/ops.hpp"
#include "gexse/verify.hpp"

using namespace gexse;

TEST_CASE("every differentiable op passes finite differences on 10 random shapes") {
    const auto results = verify::gradcheck_suite(20240601, 10);
    CHECK(results.size() >= 16);
    for (const auto& r : results) {
        INFO(verify::format_result(r));
        CHECK(r.passed);
    }
}

TEST_CASE("gradcheck is sensitive to a wrong backward rule") {
    // A deliberately broken op: forward x^2, backward claims x.
    auto broken = [](const Tensor& x) {
        std::vector<double> v(x.data().begin(), x.data().end());
        for (double& e : v) e *= e;
        return detail::make_result(x.shape(), std::move(v), {x.node()}, [](detail::Node& self) {
            auto& g = self.parents[0]->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.parents[0]->value[i];
        });
    };
    std::vector<Tensor> in{Tensor(Shape{3}, {0.5, -1.0, 2.0}, true)};
    const auto r = verify::finite_difference_check([&](auto& x) { return sum(broken(x[0])); }, in);
    CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("fft suite") {
    for (const auto& r : verify::fft_suite(99)) {
        INFO(verify::format_result(r));
        CHECK(r.passed);
    }
}
