#include "hremrg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace hremrg {

namespace {

std::size_t shape_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_str(a.shape) + " vs " +
                   shape_str(b.shape));
}

// Accumulate into a possibly-absent gradient buffer (absent for constants).
inline void acc(std::vector<double>* g, std::size_t i, double v) {
  if (g) (*g)[i] += v;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " elements");
}

Tensor Tensor::zeros(std::vector<int> s) {
  std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::vec(std::vector<double> d) {
  int n = static_cast<int>(d.size());
  return Tensor({n}, std::move(d));
}

Tensor Tensor::matrix(int r, int c, std::vector<double> d) {
  return Tensor({r, c}, std::move(d));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor is not a matrix");
  return shape[0];
}

int Tensor::cols() const {
  if (rank() == 2) return shape[1];
  if (rank() == 1) return shape[0];
  throw ShapeError("cols(): unsupported rank");
}

double Tensor::item() const {
  if (data.size() != 1) throw ContractError("item(): tensor is not scalar");
  return data[0];
}

double& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
double Tensor::at(int r, int c) const {
  return data[static_cast<std::size_t>(r) * shape[1] + c];
}

bool Tensor::finite() const {
  return std::all_of(data.begin(), data.end(),
                     [](double v) { return std::isfinite(v); });
}

int GradTape::record(int size, std::vector<int> parents, Pull pull) {
  nodes_.push_back(Node{size, std::move(parents), std::move(pull)});
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor GradTape::leaf(const std::string& name, const Tensor& value) {
  Tensor out = value;
  auto it = leaf_by_name_.find(name);
  if (it != leaf_by_name_.end()) {
    out.node = it->second;
    return out;
  }
  int id = record(static_cast<int>(value.size()), {}, nullptr);
  leaf_by_name_[name] = id;
  leaf_shape_[id] = value.shape;
  out.node = id;
  return out;
}

std::map<std::string, Tensor> GradTape::backward(const Tensor& loss) const {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size()))
    throw ContractError("backward: loss is not on this tape");

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.node].assign(1, 1.0);

  std::vector<std::vector<double>*> gin;
  for (int i = loss.node; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (grads[static_cast<std::size_t>(i)].empty() || !n.pull) continue;
    gin.clear();
    for (int p : n.parents) {
      if (p < 0) {
        gin.push_back(nullptr);
      } else {
        auto& g = grads[static_cast<std::size_t>(p)];
        if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[p].size), 0.0);
        gin.push_back(&g);
      }
    }
    n.pull(grads[static_cast<std::size_t>(i)], gin);
  }

  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : leaf_by_name_) {
    Tensor g = Tensor::zeros(leaf_shape_.at(id));
    auto& acc_g = grads[static_cast<std::size_t>(id)];
    if (!acc_g.empty()) g.data = acc_g;
    out.emplace(name, std::move(g));
  }
  return out;
}

Act act_from_string(const std::string& s) {
  if (s == "elu") return Act::Elu;
  if (s == "relu") return Act::Relu;
  if (s == "sigmoid") return Act::Sigmoid;
  if (s == "tanh") return Act::Tanh;
  throw ContractError("unknown activation: " + s);
}

Tensor linear(GradTape* t, const Tensor& x, const Tensor& W) {
  return linear(t, x, W, Tensor{});
}

Tensor linear(GradTape* t, const Tensor& x, const Tensor& W, const Tensor& b) {
  if (W.rank() != 2) throw ShapeError("linear: W must be a matrix");
  const int out = W.shape[0];
  const int k = W.shape[1];
  const bool has_b = !b.data.empty();
  if (has_b && (b.rank() != 1 || b.shape[0] != out))
    throw ShapeError("linear: bias width " + std::to_string(b.size()) +
                     " does not match output width " + std::to_string(out));

  const bool mat = x.rank() == 2;
  const int r = mat ? x.shape[0] : 1;
  if (x.cols() != k) shape_fail("linear", x, W);

  Tensor y = mat ? Tensor::zeros({r, out}) : Tensor::zeros({out});
  for (int i = 0; i < r; ++i) {
    const double* xi = x.data.data() + static_cast<std::size_t>(i) * k;
    double* yi = y.data.data() + static_cast<std::size_t>(i) * out;
    for (int o = 0; o < out; ++o) {
      double s = has_b ? b.data[o] : 0.0;
      const double* wo = W.data.data() + static_cast<std::size_t>(o) * k;
      for (int j = 0; j < k; ++j) s += wo[j] * xi[j];
      yi[o] = s;
    }
  }
  if (!t) return y;

  y.node = t->record(
      static_cast<int>(y.size()), {x.node, W.node, has_b ? b.node : -1},
      [xd = x.data, wd = W.data, r, k, out](const std::vector<double>& g,
                                            const std::vector<std::vector<double>*>& gin) {
        std::vector<double>* gx = gin[0];
        std::vector<double>* gw = gin[1];
        std::vector<double>* gb = gin[2];
        for (int i = 0; i < r; ++i) {
          const double* gi = g.data() + static_cast<std::size_t>(i) * out;
          const double* xi = xd.data() + static_cast<std::size_t>(i) * k;
          for (int o = 0; o < out; ++o) {
            const double go = gi[o];
            if (go == 0.0) continue;
            const double* wo = wd.data() + static_cast<std::size_t>(o) * k;
            for (int j = 0; j < k; ++j) {
              acc(gx, static_cast<std::size_t>(i) * k + j, go * wo[j]);
              acc(gw, static_cast<std::size_t>(o) * k + j, go * xi[j]);
            }
            acc(gb, o, go);
          }
        }
      });
  return y;
}

Tensor activate(GradTape* t, Act kind, const Tensor& x) {
  Tensor y = x;
  y.node = -1;
  for (double& v : y.data) {
    switch (kind) {
      case Act::Elu: v = v > 0 ? v : std::expm1(v); break;
      case Act::Relu: v = v > 0 ? v : 0.0; break;
      case Act::Sigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
      case Act::Tanh: v = std::tanh(v); break;
    }
  }
  if (!t) return y;
  y.node = t->record(
      static_cast<int>(y.size()), {x.node},
      [kind, xd = x.data, yd = y.data](const std::vector<double>& g,
                                       const std::vector<std::vector<double>*>& gin) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          double d = 0.0;
          switch (kind) {
            case Act::Elu: d = xd[i] > 0 ? 1.0 : yd[i] + 1.0; break;
            case Act::Relu: d = xd[i] > 0 ? 1.0 : 0.0; break;
            case Act::Sigmoid: d = yd[i] * (1.0 - yd[i]); break;
            case Act::Tanh: d = 1.0 - yd[i] * yd[i]; break;
          }
          acc(gin[0], i, g[i] * d);
        }
      });
  return y;
}

namespace {

// Apply softmax over `len` contiguous-strided entries starting at `base`.
void softmax_slice(std::vector<double>& d, std::size_t base, int len, std::size_t stride) {
  double mx = d[base];
  for (int i = 1; i < len; ++i) mx = std::max(mx, d[base + i * stride]);
  double z = 0.0;
  for (int i = 0; i < len; ++i) {
    double e = std::exp(d[base + i * stride] - mx);
    d[base + i * stride] = e;
    z += e;
  }
  for (int i = 0; i < len; ++i) d[base + i * stride] /= z;
}

}  // namespace

Tensor softmax(GradTape* t, const Tensor& x, int axis) {
  if (x.rank() != 1 && x.rank() != 2)
    throw ShapeError("softmax: rank must be 1 or 2");
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: bad axis");
  if (x.data.empty()) throw ShapeError("softmax: empty input");

  Tensor y = x;
  y.node = -1;
  int len, nslices;
  std::size_t stride, slice_step;
  if (x.rank() == 1) {
    len = x.shape[0]; nslices = 1; stride = 1; slice_step = 0;
  } else if (axis == 1) {
    len = x.shape[1]; nslices = x.shape[0]; stride = 1;
    slice_step = static_cast<std::size_t>(x.shape[1]);
  } else {
    len = x.shape[0]; nslices = x.shape[1];
    stride = static_cast<std::size_t>(x.shape[1]); slice_step = 1;
  }
  for (int s = 0; s < nslices; ++s)
    softmax_slice(y.data, static_cast<std::size_t>(s) * slice_step, len, stride);

  if (!t) return y;
  y.node = t->record(
      static_cast<int>(y.size()), {x.node},
      [yd = y.data, len, nslices, stride, slice_step](
          const std::vector<double>& g, const std::vector<std::vector<double>*>& gin) {
        for (int s = 0; s < nslices; ++s) {
          const std::size_t base = static_cast<std::size_t>(s) * slice_step;
          double dot = 0.0;
          for (int i = 0; i < len; ++i)
            dot += g[base + i * stride] * yd[base + i * stride];
          for (int i = 0; i < len; ++i) {
            const std::size_t k = base + i * stride;
            acc(gin[0], k, yd[k] * (g[k] - dot));
          }
        }
      });
  return y;
}

Tensor log_softmax(GradTape* t, const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("log_softmax: vector input expected");
  if (x.data.empty()) throw ShapeError("log_softmax: empty input");
  const double mx = *std::max_element(x.data.begin(), x.data.end());
  double z = 0.0;
  for (double v : x.data) z += std::exp(v - mx);
  const double lz = mx + std::log(z);
  Tensor y = x;
  y.node = -1;
  for (double& v : y.data) v -= lz;

  if (!t) return y;
  y.node = t->record(
      static_cast<int>(y.size()), {x.node},
      [yd = y.data](const std::vector<double>& g,
                    const std::vector<std::vector<double>*>& gin) {
        double gsum = std::accumulate(g.begin(), g.end(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i)
          acc(gin[0], i, g[i] - std::exp(yd[i]) * gsum);
      });
  return y;
}

Tensor layer_norm(GradTape* t, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps) {
  if (x.rank() != 1) throw ShapeError("layer_norm: vector input expected");
  const int n = x.shape[0];
  if (gain.rank() != 1 || gain.shape[0] != n) shape_fail("layer_norm gain", x, gain);
  if (bias.rank() != 1 || bias.shape[0] != n) shape_fail("layer_norm bias", x, bias);

  double mu = std::accumulate(x.data.begin(), x.data.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x.data) var += (v - mu) * (v - mu);
  var /= n;
  const double inv_sigma = 1.0 / std::sqrt(var + eps);

  std::vector<double> xhat(static_cast<std::size_t>(n));
  Tensor y = Tensor::zeros({n});
  for (int i = 0; i < n; ++i) {
    xhat[i] = (x.data[i] - mu) * inv_sigma;
    y.data[i] = gain.data[i] * xhat[i] + bias.data[i];
  }

  if (!t) return y;
  y.node = t->record(
      n, {x.node, gain.node, bias.node},
      [xhat, gd = gain.data, inv_sigma, n](const std::vector<double>& g,
                                           const std::vector<std::vector<double>*>& gin) {
        // dL/dxhat_i = g_i * gain_i; fold the mean/variance paths analytically
        std::vector<double> dxh(static_cast<std::size_t>(n));
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
          dxh[i] = g[i] * gd[i];
          s1 += dxh[i];
          s2 += dxh[i] * xhat[i];
        }
        for (int i = 0; i < n; ++i) {
          acc(gin[0], i, inv_sigma * (dxh[i] - s1 / n - xhat[i] * s2 / n));
          acc(gin[1], i, g[i] * xhat[i]);
          acc(gin[2], i, g[i]);
        }
      });
  return y;
}

Tensor glu(GradTape* t, const Tensor& x, const Tensor& Wa, const Tensor& Wb) {
  Tensor a = linear(t, x, Wa);
  Tensor b = linear(t, x, Wb);
  if (a.size() != b.size())
    throw ShapeError("glu: Wa and Wb output widths differ");
  return mul(t, a, activate(t, Act::Sigmoid, b));
}

std::pair<Tensor, Tensor> lstm_cell(GradTape* t, const Tensor& x,
                                    const Tensor& h_prev, const Tensor& c_prev,
                                    const LstmParams& p) {
  const int h4 = p.W_ih.shape[0];
  if (h4 % 4 != 0) throw ShapeError("lstm_cell: gate width not divisible by 4");
  const int h = h4 / 4;
  if (h_prev.cols() != h || c_prev.cols() != h)
    throw ShapeError("lstm_cell: state width does not match hidden size");

  Tensor gates = add(t, linear(t, x, p.W_ih, p.b), linear(t, h_prev, p.W_hh));
  Tensor i_g = activate(t, Act::Sigmoid, slice(t, gates, 0, h));
  Tensor f_g = activate(t, Act::Sigmoid, slice(t, gates, h, h));
  Tensor g_g = activate(t, Act::Tanh, slice(t, gates, 2 * h, h));
  Tensor o_g = activate(t, Act::Sigmoid, slice(t, gates, 3 * h, h));
  Tensor c = add(t, mul(t, f_g, c_prev), mul(t, i_g, g_g));
  Tensor hh = mul(t, o_g, activate(t, Act::Tanh, c));
  return {hh, c};
}

Tensor add(GradTape* t, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) shape_fail("add", a, b);
  Tensor y = a;
  y.node = -1;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
  if (!t) return y;
  y.node = t->record(static_cast<int>(y.size()), {a.node, b.node},
                     [](const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         acc(gin[0], i, g[i]);
                         acc(gin[1], i, g[i]);
                       }
                     });
  return y;
}

Tensor sub(GradTape* t, const Tensor& a, const Tensor& b) {
  return add(t, a, scale(t, b, -1.0));
}

Tensor mul(GradTape* t, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) shape_fail("mul", a, b);
  Tensor y = a;
  y.node = -1;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= b.data[i];
  if (!t) return y;
  y.node = t->record(static_cast<int>(y.size()), {a.node, b.node},
                     [ad = a.data, bd = b.data](const std::vector<double>& g,
                                                const std::vector<std::vector<double>*>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         acc(gin[0], i, g[i] * bd[i]);
                         acc(gin[1], i, g[i] * ad[i]);
                       }
                     });
  return y;
}

Tensor scale(GradTape* t, const Tensor& a, double s) {
  Tensor y = a;
  y.node = -1;
  for (double& v : y.data) v *= s;
  if (!t) return y;
  y.node = t->record(static_cast<int>(y.size()), {a.node},
                     [s](const std::vector<double>& g,
                         const std::vector<std::vector<double>*>& gin) {
                       for (std::size_t i = 0; i < g.size(); ++i)
                         acc(gin[0], i, g[i] * s);
                     });
  return y;
}

Tensor sum(GradTape* t, const Tensor& x) {
  Tensor y = Tensor::scalar(std::accumulate(x.data.begin(), x.data.end(), 0.0));
  if (!t) return y;
  y.node = t->record(1, {x.node},
                     [n = x.size()](const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& gin) {
                       for (std::size_t i = 0; i < n; ++i) acc(gin[0], i, g[0]);
                     });
  return y;
}

Tensor pick(GradTape* t, const Tensor& x, int i) {
  if (i < 0 || static_cast<std::size_t>(i) >= x.size())
    throw ShapeError("pick: index out of range");
  Tensor y = Tensor::scalar(x.data[static_cast<std::size_t>(i)]);
  if (!t) return y;
  y.node = t->record(1, {x.node},
                     [i](const std::vector<double>& g,
                         const std::vector<std::vector<double>*>& gin) {
                       acc(gin[0], static_cast<std::size_t>(i), g[0]);
                     });
  return y;
}

Tensor slice(GradTape* t, const Tensor& x, int start, int len) {
  if (x.rank() != 1) throw ShapeError("slice: vector input expected");
  if (start < 0 || len < 0 || start + len > x.shape[0])
    throw ShapeError("slice: out of range");
  Tensor y = Tensor::zeros({len});
  std::copy(x.data.begin() + start, x.data.begin() + start + len, y.data.begin());
  if (!t) return y;
  y.node = t->record(len, {x.node},
                     [start, len](const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& gin) {
                       for (int i = 0; i < len; ++i)
                         acc(gin[0], static_cast<std::size_t>(start + i), g[i]);
                     });
  return y;
}

Tensor concat(GradTape* t, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  int total = 0;
  std::vector<int> parents;
  std::vector<int> lens;
  for (const Tensor& p : parts) {
    if (p.rank() != 1) throw ShapeError("concat: vector inputs expected");
    total += p.shape[0];
    parents.push_back(p.node);
    lens.push_back(p.shape[0]);
  }
  Tensor y = Tensor::zeros({total});
  int off = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data.begin(), p.data.end(), y.data.begin() + off);
    off += static_cast<int>(p.size());
  }
  if (!t) return y;
  y.node = t->record(total, std::move(parents),
                     [lens](const std::vector<double>& g,
                            const std::vector<std::vector<double>*>& gin) {
                       std::size_t off = 0;
                       for (std::size_t p = 0; p < lens.size(); ++p) {
                         for (int i = 0; i < lens[p]; ++i)
                           acc(gin[p], static_cast<std::size_t>(i), g[off + i]);
                         off += static_cast<std::size_t>(lens[p]);
                       }
                     });
  return y;
}

Tensor row_lookup(GradTape* t, const Tensor& E, int row) {
  if (E.rank() != 2) throw ShapeError("row_lookup: matrix expected");
  if (row < 0 || row >= E.shape[0]) throw ShapeError("row_lookup: row out of range");
  const int d = E.shape[1];
  Tensor y = Tensor::zeros({d});
  std::copy(E.data.begin() + static_cast<std::size_t>(row) * d,
            E.data.begin() + static_cast<std::size_t>(row + 1) * d, y.data.begin());
  if (!t) return y;
  y.node = t->record(d, {E.node},
                     [row, d](const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& gin) {
                       for (int i = 0; i < d; ++i)
                         acc(gin[0], static_cast<std::size_t>(row) * d + i, g[i]);
                     });
  return y;
}

Tensor mean_vecs(GradTape* t, std::span<const Tensor> vs) {
  if (vs.empty()) throw ShapeError("mean_vecs: no inputs");
  Tensor y = Tensor::zeros(vs[0].shape);
  std::vector<int> parents;
  for (const Tensor& v : vs) {
    if (v.shape != vs[0].shape) shape_fail("mean_vecs", vs[0], v);
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += v.data[i];
    parents.push_back(v.node);
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& v : y.data) v *= inv;
  if (!t) return y;
  y.node = t->record(static_cast<int>(y.size()), std::move(parents),
                     [inv](const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& gin) {
                       for (auto* gp : gin)
                         for (std::size_t i = 0; i < g.size(); ++i)
                           acc(gp, i, g[i] * inv);
                     });
  return y;
}

Tensor weighted_sum_vecs(GradTape* t, const Tensor& a, std::span<const Tensor> vs) {
  if (a.rank() != 1 || static_cast<std::size_t>(a.shape[0]) != vs.size())
    throw ShapeError("weighted_sum_vecs: weight count does not match vectors");
  if (vs.empty()) throw ShapeError("weighted_sum_vecs: no inputs");
  Tensor y = Tensor::zeros(vs[0].shape);
  std::vector<int> parents{a.node};
  for (std::size_t k = 0; k < vs.size(); ++k) {
    if (vs[k].shape != vs[0].shape) shape_fail("weighted_sum_vecs", vs[0], vs[k]);
    for (std::size_t i = 0; i < y.data.size(); ++i)
      y.data[i] += a.data[k] * vs[k].data[i];
    parents.push_back(vs[k].node);
  }
  if (!t) return y;
  std::vector<std::vector<double>> vals;
  vals.reserve(vs.size());
  for (const Tensor& v : vs) vals.push_back(v.data);
  y.node = t->record(static_cast<int>(y.size()), std::move(parents),
                     [ad = a.data, vals](const std::vector<double>& g,
                                         const std::vector<std::vector<double>*>& gin) {
                       for (std::size_t k = 0; k < vals.size(); ++k) {
                         double dot = 0.0;
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           dot += g[i] * vals[k][i];
                           acc(gin[k + 1], i, g[i] * ad[k]);
                         }
                         acc(gin[0], k, dot);
                       }
                     });
  return y;
}

}  // namespace hremrg
