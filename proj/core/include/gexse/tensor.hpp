#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gexse {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

/// One recorded value in the computation graph.
///
/// Interior nodes own their parents and a backward rule that reads `grad`
/// and accumulates into each parent's `grad`. Leaves have no parents.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::uint64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

std::uint64_t next_node_id();

}  // namespace detail

/// Dense row-major float64 array with reverse-mode gradient tracking.
///
/// Values are immutable once an op has produced them. The one exception is
/// `mutable_data()` on leaf tensors, which optimizers use between passes.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    bool is_leaf() const;
    /// Empty span when no gradient has been accumulated yet.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    std::uint64_t node_id() const;
    /// Value copy with no graph history.
    Tensor detach() const;
    /// Deep copy that keeps requires_grad but shares nothing.
    Tensor clone_leaf() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// True while gradient recording is enabled on this thread.
bool grad_enabled();

/// Disables graph recording for its lifetime (evaluation passes).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Topologically ordered view of every node reachable from a root.
class Tape {
public:
    static Tape record(const Tensor& root);

    std::size_t size() const { return order_.size(); }
    const std::vector<detail::Node*>& order() const { return order_; }

private:
    std::vector<detail::Node*> order_;
};

/// Reverse pass from a scalar loss. Leaf gradients accumulate across calls.
/// Unless `retain_graph` is set, interior nodes release their parents and
/// backward rules afterwards, so the graph is discarded.
void backward(const Tensor& loss, bool retain_graph = false);

namespace detail {

/// Builds an op result. When no parent requires grad (or recording is off)
/// the result is a plain constant and `fn` is dropped.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> fn);

}  // namespace detail

}  // namespace gexse
