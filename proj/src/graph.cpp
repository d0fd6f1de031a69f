#include "iterseg/graph.hpp"

namespace iterseg {

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
    if (v.id >= nodes_.size()) {
        throw Error("graph: node " + std::to_string(v.id) + " does not exist (" + std::to_string(nodes_.size()) +
                    " nodes)");
    }
    return nodes_[v.id];
}

template <typename T>
Var Graph<T>::input(Tensor<T> value, bool requires_grad) {
    nodes_.push_back(Node{"input", {}, std::move(value), {}, requires_grad, {}});
    return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::record(std::string_view op, std::vector<Var> inputs, Tensor<T> value, BackwardFn backward) {
    bool needs_grad = false;
    for (Var in : inputs) needs_grad = needs_grad || node(in).requires_grad;
    nodes_.push_back(Node{std::string(op), std::move(inputs), std::move(value), std::move(backward), needs_grad, {}});
    return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty()) {
        throw Error("graph: node " + std::to_string(v.id) + " (" + n.op + ") has no gradient");
    }
    return n.grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
    const Node& root = node(loss);
    if (root.value.size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(root.value.shape()));
    }
    if (backward_done_) throw Error("backward: gradients already populated; call zero_grad() first");
    backward_done_ = true;
    if (!root.requires_grad) return;

    nodes_[loss.id].grad = Tensor<T>(root.value.shape(), T(1));
    std::vector<Tensor<T>*> input_grads;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.backward) continue;
        input_grads.assign(n.inputs.size(), nullptr);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            Node& in = nodes_[n.inputs[k].id];
            if (!in.requires_grad) continue;
            if (in.grad.empty()) in.grad = Tensor<T>::zeros_like(in.value);
            input_grads[k] = &in.grad;
        }
        n.backward(*this, n.value, n.grad, input_grads);
    }
    for (auto& n : nodes_) {
        if (n.requires_grad && n.inputs.empty() && n.grad.empty()) n.grad = Tensor<T>::zeros_like(n.value);
    }
}

template <typename T>
void Graph<T>::zero_grad() {
    for (auto& n : nodes_) n.grad = Tensor<T>();
    backward_done_ = false;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace iterseg
