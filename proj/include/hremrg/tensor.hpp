#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hremrg {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Dense row-major tensor of 64-bit floats. `node` is a handle into the
// active GradTape, or -1 for a plain value.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  int node = -1;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> s);
  static Tensor vec(std::vector<double> d);
  static Tensor matrix(int r, int c, std::vector<double> d);
  static Tensor scalar(double v);

  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;
  std::size_t size() const { return data.size(); }
  double item() const;
  double& at(int r, int c);
  double at(int r, int c) const;
  bool finite() const;
};

// Reverse-mode tape. Nodes are appended in construction order, so a single
// reverse sweep visits them in reverse topological order. Named leaves are
// deduplicated, which lets a forward pass bind the same parameter several
// times and still accumulate one gradient.
class GradTape {
 public:
  using Pull = std::function<void(const std::vector<double>& grad_out,
                                  const std::vector<std::vector<double>*>& grad_in)>;

  int record(int size, std::vector<int> parents, Pull pull);
  Tensor leaf(const std::string& name, const Tensor& value);

  // Gradient of `loss` (scalar, on this tape) w.r.t. every named leaf.
  // Leaves the loss does not reach get zero gradients.
  std::map<std::string, Tensor> backward(const Tensor& loss) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    int size;
    std::vector<int> parents;
    Pull pull;
  };
  std::vector<Node> nodes_;
  std::map<std::string, int> leaf_by_name_;
  std::map<int, std::vector<int>> leaf_shape_;
};

enum class Act { Elu, Relu, Sigmoid, Tanh };

Act act_from_string(const std::string& s);

// y = x W^T (+ b). x is a vector of width k or a matrix r x k; W is out x k.
Tensor linear(GradTape* t, const Tensor& x, const Tensor& W);
Tensor linear(GradTape* t, const Tensor& x, const Tensor& W, const Tensor& b);

Tensor activate(GradTape* t, Act kind, const Tensor& x);

// Stable (max-subtracted) softmax along `axis`. Vectors use axis 0; matrices
// accept axis 0 (columns) or 1 (rows).
Tensor softmax(GradTape* t, const Tensor& x, int axis = 0);
Tensor log_softmax(GradTape* t, const Tensor& x);

Tensor layer_norm(GradTape* t, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-5);

// (Wa x) \odot sigmoid(Wb x)
Tensor glu(GradTape* t, const Tensor& x, const Tensor& Wa, const Tensor& Wb);

struct LstmParams {
  Tensor W_ih;  // 4h x in
  Tensor W_hh;  // 4h x h
  Tensor b;     // 4h, gate order i, f, g, o
};

std::pair<Tensor, Tensor> lstm_cell(GradTape* t, const Tensor& x,
                                    const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& p);

Tensor add(GradTape* t, const Tensor& a, const Tensor& b);
Tensor sub(GradTape* t, const Tensor& a, const Tensor& b);
Tensor mul(GradTape* t, const Tensor& a, const Tensor& b);
Tensor scale(GradTape* t, const Tensor& a, double s);
Tensor sum(GradTape* t, const Tensor& x);
Tensor pick(GradTape* t, const Tensor& x, int i);
Tensor slice(GradTape* t, const Tensor& x, int start, int len);
Tensor concat(GradTape* t, std::span<const Tensor> parts);
Tensor row_lookup(GradTape* t, const Tensor& E, int row);
Tensor mean_vecs(GradTape* t, std::span<const Tensor> vs);
// y = sum_i a[i] * vs[i]
Tensor weighted_sum_vecs(GradTape* t, const Tensor& a, std::span<const Tensor> vs);

}  // namespace hremrg
