#ifndef IUP_TENSOR_HPP
#define IUP_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace iup {

struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorNode {
  std::vector<int> shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(TensorNode&)> backward;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

/// Handle to a node of the reverse-mode graph. Value semantics on the handle,
/// shared storage underneath.
template <typename S>
class Tensor {
 public:
  using Node = TensorNode<S>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }
  static Tensor filled(std::vector<int> shape, S v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    int total = 1;
    for (int d : shape) total *= d;
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(total), v);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor from_vector(std::vector<int> shape, std::vector<S> data,
                            bool requires_grad = false) {
    int total = 1;
    for (int d : shape) total *= d;
    if (static_cast<size_t>(total) != data.size())
      throw TensorError("from_vector: data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor scalar(S v, bool requires_grad = false) {
    return from_vector({1}, {v}, requires_grad);
  }

  bool defined() const { return n_ != nullptr; }
  Node* node() const { return n_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return n_; }

  const std::vector<int>& shape() const { return n_->shape; }
  int numel() const { return static_cast<int>(n_->value.size()); }
  std::vector<S>& value() { return n_->value; }
  const std::vector<S>& value() const { return n_->value; }
  std::vector<S>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<S>& grad() const {
    n_->ensure_grad();
    return n_->grad;
  }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  void zero_grad() { n_->grad.assign(n_->value.size(), S(0)); }

  S item() const {
    if (numel() != 1) throw TensorError("item: tensor has shape " + shape_str(shape()));
    return n_->value[0];
  }

  /// Copy of the value with no graph attached.
  Tensor detach() const {
    auto n = std::make_shared<Node>();
    n->shape = n_->shape;
    n->value = n_->value;
    return Tensor(std::move(n));
  }

  /// Reverse pass from a scalar. Interior grads are freshly allocated per
  /// forward; leaf grads accumulate and are managed by the caller.
  void backward() const {
    if (numel() != 1) throw TensorError("backward: loss must be scalar, got " + shape_str(shape()));
    std::vector<Node*> order;
    topo_sort(order);
    n_->ensure_grad();
    n_->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backward) {
        for (auto& p : node->parents) p->ensure_grad();
        node->backward(*node);
      }
    }
  }

 private:
  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<Node*> done;
    // Iterative DFS; graphs can be deep (long conv chains).
    struct Frame {
      Node* node;
      size_t next_parent;
    };
    std::vector<Frame> stack{{n_.get(), 0}};
    std::unordered_set<Node*> on_stack{n_.get()};
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_parent < f.node->parents.size()) {
        Node* p = f.node->parents[f.next_parent++].get();
        if (!done.count(p) && !on_stack.count(p)) {
          stack.push_back({p, 0});
          on_stack.insert(p);
        }
      } else {
        done.insert(f.node);
        order.push_back(f.node);
        on_stack.erase(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> n_;
};

namespace detail {

template <typename S, typename... Parents>
std::shared_ptr<TensorNode<S>> make_node(const char* op, std::vector<int> shape,
                                         const Parents&... parents) {
  auto n = std::make_shared<TensorNode<S>>();
  int total = 1;
  for (int d : shape) total *= d;
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(total), S(0));
  n->op = op;
  (n->parents.push_back(parents.node_ptr()), ...);
  for (auto& p : n->parents) n->requires_grad = n->requires_grad || p->requires_grad;
  return n;
}

}  // namespace detail

}  // namespace iup

#endif
