// Reverse-mode automatic differentiation over dense tensors.
//
// A Graph is an append-only record of one forward computation. Ops return
// Var handles; Graph::backward walks the record in reverse and accumulates
// exact gradients into every node that requires them. All arithmetic is
// 64-bit; shapes are dense row-major.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ssllanes::ad {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Handle to one node of a Graph. Cheap to copy, valid while the graph lives.
class Var {
 public:
  Var() = default;
  const Shape& shape() const;
  const std::vector<double>& value() const;
  const std::vector<double>& grad() const;
  bool requires_grad() const;
  bool defined() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph* graph() const { return graph_; }
  double scalar() const;  // value of a 1-element tensor

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    std::function<void(Graph&)> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Shape shape, std::vector<double> values);
  Var constant_scalar(double v);
  Var leaf(Shape shape, std::vector<double> values, bool requires_grad);

  // Reverse pass from a scalar loss; `seed` is the incoming gradient
  // (1/batch for mean reductions over a batch). Throws on non-scalar loss.
  void backward(const Var& loss, double seed = 1.0);

  std::size_t size() const { return nodes_.size(); }
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  Var make(Shape shape, std::vector<double> value, bool requires_grad_flag,
           std::function<void(Graph&)> backward);

 private:
  std::vector<Node> nodes_;
};

// ---- core op set -----------------------------------------------------------

Var matmul(Var a, Var b);                 // [m,k]x[k,n] -> [m,n]
Var add(Var a, Var b);                    // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                    // elementwise
Var mul_scalar(Var a, double c);
Var add_scalar(Var a, double c);
Var add_const(Var a, const std::vector<double>& c);
Var mul_const(Var a, const std::vector<double>& c);
Var concat(const std::vector<Var>& xs, int axis);  // 1-D axis 0, 2-D axis 0/1
Var gather_rows(Var x, std::vector<int> rows);
Var scatter_add_rows(Var x, std::vector<int> rows, int out_rows);
Var tile_rows(Var row, int n);            // [f] or [1,f] -> [n,f]
Var select_index(Var x, int i);           // 1-D -> scalar
Var reshape(Var x, Shape shape);
Var relu(Var x);
Var sigmoid(Var x);
// Normalizes across the last axis for 1-D/2-D input and across the channel
// axis for [n,c,l] input; gain/bias are learned per-feature.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax(Var x);                       // 1-D
Var conv1d(Var x, Var w, Var b, int stride, int pad);  // [n,ci,l], [co,ci,k], [co]
Var upsample_nearest(Var x, int out_len); // [n,c,l] -> [n,c,out_len]
Var select_time(Var x, int t);            // [n,c,l] -> [n,c]
Var linear(Var x, Var w, Var b);          // x.w (+ row-broadcast b); pass Var() for no bias
Var cumsum_rows(Var x);                   // prefix sums along axis 0
Var sum(Var x);                           // -> scalar
Var mean_all(Var x);                      // -> scalar
Var masked_mean(Var x, const std::vector<bool>& row_mask);  // mean over kept rows
Var norm2(Var a, Var b);                  // Euclidean distance, -> scalar
Var smooth_l1(Var pred, Var target, double beta = 1.0);     // mean, -> scalar
Var mse(Var pred, Var target);                              // mean, -> scalar
Var cross_entropy(Var logits, const std::vector<int>& labels);  // [n,c] or [c]
Var focal_loss(Var logits, const std::vector<int>& labels, double gamma,
               double alpha);             // binary, from logits, mean

}  // namespace ssllanes::ad
