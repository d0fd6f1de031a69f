#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iterseg/tensor.hpp"

namespace iterseg {

/// Handle to a node of a Graph.
struct Var {
    std::size_t id = 0;
    bool operator==(const Var&) const = default;
};

/// Reverse-mode tape. Nodes are appended in execution order, so the node list is
/// already topologically sorted and backward() walks it in exact reverse.
///
/// Gradients accumulate across nodes within one backward pass. A second
/// backward() without an intervening zero_grad() is rejected.
template <typename T>
class Graph {
  public:
    /// Accumulates d(loss)/d(input_k) into input_grads[k]; entries are null for
    /// inputs that do not require gradients. `output` is the node's own value.
    using BackwardFn = std::function<void(const Graph& graph, const Tensor<T>& output, const Tensor<T>& grad_out,
                                          std::span<Tensor<T>* const> input_grads)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var input(Tensor<T> value, bool requires_grad = false);

    /// Appends an op node. requires_grad propagates from the inputs.
    Var record(std::string_view op, std::vector<Var> inputs, Tensor<T> value, BackwardFn backward);

    const Tensor<T>& value(Var v) const { return node(v).value; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    bool has_grad(Var v) const { return !node(v).grad.empty(); }
    const Tensor<T>& grad(Var v) const;
    std::string_view op(Var v) const { return node(v).op; }
    std::span<const Var> inputs(Var v) const { return node(v).inputs; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad node.
    /// The loss must hold exactly one element.
    void backward(Var loss);

    void zero_grad();

  private:
    struct Node {
        std::string op;
        std::vector<Var> inputs;
        Tensor<T> value;
        BackwardFn backward;
        bool requires_grad = false;
        Tensor<T> grad;
    };

    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace iterseg
