#include "gexse/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "gexse/error.hpp"

namespace gexse {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

std::uint64_t next_node_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) throw_shape("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw_shape("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                    shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    node->id = detail::next_node_id();
    return node;
}
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
    if (!node_) throw_shape("use of an undefined tensor");
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) throw_shape("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
    if (!node_) throw_shape("use of an undefined tensor");
    return node_->value;
}

std::span<double> Tensor::mutable_data() {
    if (!node_) throw_shape("use of an undefined tensor");
    if (!node_->parents.empty()) throw_shape("mutable_data() is only available on leaf tensors");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw_shape("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) throw_shape("index rank mismatch for " + shape_str(s));
    std::size_t flat = 0;
    std::size_t i = 0;
    for (std::size_t ix : index) {
        if (ix >= s[i]) throw_shape("index out of range for " + shape_str(s));
        flat = flat * s[i] + ix;
        ++i;
    }
    return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

std::span<const double> Tensor::grad() const {
    if (!node_) return {};
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    if (!node_) return {};
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

std::uint64_t Tensor::node_id() const { return node_ ? node_->id : 0; }

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

Tensor Tensor::clone_leaf() const { return Tensor(shape(), node_->value, node_->requires_grad); }

Tape Tape::record(const Tensor& root) {
    Tape tape;
    if (!root.defined()) return tape;
    // Iterative post-order DFS; each node is emitted once, after all its inputs.
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next_parent] = stack.back();
        if (next_parent < node->parents.size()) {
            detail::Node* p = node->parents[next_parent++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void backward(const Tensor& loss, bool retain_graph) {
    if (!loss.defined()) throw_shape("backward() on an undefined tensor");
    if (loss.numel() != 1) throw_shape("backward() requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    const Tape tape = Tape::record(loss);
    detail::Node* root = loss.node().get();
    // Interior gradients are per-pass; leaf gradients accumulate.
    for (detail::Node* n : tape.order()) {
        if (!n->parents.empty()) n->grad.clear();
    }
    root->ensure_grad()[0] += 1.0;

    const auto& order = tape.order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->parents.empty() || !n->backward_fn) continue;
        if (n->grad.empty()) continue;  // unreachable from the loss along differentiable paths
        n->backward_fn(*n);
    }

    for (detail::Node* n : order) {
        if (n->parents.empty()) continue;
        if (!retain_graph) {
            n->backward_fn = nullptr;
            n->parents.clear();
            n->requires_grad = false;
        }
        n->grad.clear();
    }
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> value, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->id = next_node_id();
    bool any = false;
    if (t_grad_enabled) {
        for (const auto& p : parents) any = any || p->requires_grad;
    }
    if (any) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace gexse
