#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dispdiff {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// Dense n-d array of doubles, row-major. Data is shared between views of the
// same value; node/tape_id link the tensor to the tape that recorded it.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  bool requires_grad = false;
  std::int64_t tape_id = -1;
  int node = -1;

  Tensor() : shape{0}, data(std::make_shared<std::vector<double>>()) {}

  static Tensor zeros(std::vector<int> shape_in) {
    Tensor t;
    t.shape = std::move(shape_in);
    t.data = std::make_shared<std::vector<double>>(static_cast<std::size_t>(numel_of(t.shape)), 0.0);
    return t;
  }

  static Tensor full(std::vector<int> shape_in, double value) {
    Tensor t = zeros(std::move(shape_in));
    for (double& v : *t.data) v = value;
    return t;
  }

  static Tensor from(std::vector<int> shape_in, std::vector<double> values) {
    if (numel_of(shape_in) != static_cast<std::int64_t>(values.size()))
      throw ShapeError("Tensor::from: shape " + shape_str(shape_in) + " does not match " +
                       std::to_string(values.size()) + " values");
    Tensor t;
    t.shape = std::move(shape_in);
    t.data = std::make_shared<std::vector<double>>(std::move(values));
    return t;
  }

  static Tensor scalar(double value) { return from({1}, {value}); }

  static std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  std::int64_t numel() const { return numel_of(shape); }
  int ndim() const { return static_cast<int>(shape.size()); }

  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const {
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw ShapeError("cols(): tensor is not 1-d or 2-d: " + shape_str(shape));
  }

  double& at(int i, int j) { return (*data)[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return (*data)[static_cast<std::size_t>(i) * cols() + j]; }
  double& operator[](std::size_t i) { return (*data)[i]; }
  double operator[](std::size_t i) const { return (*data)[i]; }

  double value() const {
    if (numel() != 1) throw ShapeError("value(): tensor is not scalar: " + shape_str(shape));
    return (*data)[0];
  }

  // Deep copy of the value, detached from any tape.
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<double>>(*data);
    return t;
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order by construction; backward() walks them once in reverse.
// A tape is single-use: after backward() it only serves gradient reads.
class Tape {
 public:
  Tape() : id_(nextId()++) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::int64_t id() const { return id_; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Registers a leaf; gradients accumulate into it during backward.
  void watch(Tensor& t) {
    t.requires_grad = true;
    t.tape_id = id_;
    t.node = add_node(t.numel(), {}, nullptr);
  }

  bool tracks(const Tensor& t) const { return t.node >= 0 && t.tape_id == id_; }

  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  int add_node(std::int64_t size, std::vector<int> parents, BackwardFn backward) {
    if (consumed_)
      throw std::runtime_error("Tape: cannot record on a consumed tape");
    nodes_.push_back(Node{std::move(parents), std::move(backward), size});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Marks the op output as tracked by this tape.
  void adopt(Tensor& out, int node) {
    out.requires_grad = true;
    out.tape_id = id_;
    out.node = node;
  }

  std::vector<double>& grad_buf(int node) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty() && nodes_[static_cast<std::size_t>(node)].size > 0)
      g.assign(static_cast<std::size_t>(nodes_[static_cast<std::size_t>(node)].size), 0.0);
    return g;
  }

  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape));
    if (!tracks(loss))
      throw std::runtime_error("backward: loss was not produced through this tape");
    if (consumed_) throw std::runtime_error("backward: tape already consumed");
    consumed_ = true;
    grads_.assign(nodes_.size(), {});
    grad_buf(loss.node)[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      const auto& g = grads_[static_cast<std::size_t>(i)];
      if (n.backward && !g.empty()) n.backward(*this, g);
    }
  }

  // Gradient of the last backward() w.r.t. a tracked tensor. Zero-filled if
  // the tensor did not influence the loss.
  std::vector<double> grad(const Tensor& t) const {
    if (!tracks(t)) throw std::runtime_error("grad: tensor is not tracked by this tape");
    if (!consumed_) throw std::runtime_error("grad: backward() has not run");
    const auto& g = grads_[static_cast<std::size_t>(t.node)];
    if (g.empty()) return std::vector<double>(static_cast<std::size_t>(t.numel()), 0.0);
    return g;
  }

 private:
  struct Node {
    std::vector<int> parents;
    BackwardFn backward;
    std::int64_t size;
  };

  static std::int64_t& nextId() {
    static std::int64_t id = 1;
    return id;
  }

  std::int64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool consumed_ = false;
};

}  // namespace dispdiff
