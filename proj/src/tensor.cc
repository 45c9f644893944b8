#include "clinprompt/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "clinprompt/error.h"
#include "clinprompt/rng.h"

namespace clinprompt {
namespace {

std::atomic<uint64_t> g_next_seq{1};
thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<TensorNode>;
using BackwardFn = std::function<void(TensorNode&)>;

NodePtr new_node(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = shape;
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

// Wraps an op result. History is kept only when recording is on and some
// input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<NodePtr> parents, BackwardFn fn) {
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  auto n = new_node(shape, std::move(data), needs);
  if (needs) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return Tensor(std::move(n));
}

void require_shape(bool ok, const std::string& op, const Shape& a,
                   const Shape& b) {
  if (!ok) {
    throw DimensionError(op + ": incompatible shapes " + a.str() + " and " +
                         b.str());
  }
}

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* out, size_t m, size_t k,
             size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* o = out + i * n;
    const double* ar = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b + p * n;
      for (size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

// out[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* out, size_t m, size_t k,
             size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    for (size_t j = 0; j < n; ++j) {
      const double* br = b + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out[i * n + j] += acc;
    }
  }
}

// out[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* out, size_t m, size_t k,
             size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    const double* br = b + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* o = out + p * n;
      for (size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

double gelu_value(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

double gelu_derivative(double x) {
  constexpr double kC = 0.7978845608028654;
  const double u = kC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.rows == 0 || shape.cols == 0) {
    throw DimensionError("tensor dimensions must be positive, got " +
                         shape.str());
  }
  if (shape.size() != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape.str());
  }
  node_ = new_node(shape, std::move(data), requires_grad);
}

Tensor Tensor::zeros(size_t rows, size_t cols, bool requires_grad) {
  return full(rows, cols, 0.0, requires_grad);
}

Tensor Tensor::ones(size_t rows, size_t cols, bool requires_grad) {
  return full(rows, cols, 1.0, requires_grad);
}

Tensor Tensor::full(size_t rows, size_t cols, double value,
                    bool requires_grad) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, value),
                requires_grad);
}

Tensor Tensor::from_rows(
    std::initializer_list<std::initializer_list<double>> rows,
    bool requires_grad) {
  const size_t r = rows.size();
  const size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data), requires_grad);
}

Tensor Tensor::randn(size_t rows, size_t cols, double stddev, Rng& rng,
                     bool requires_grad) {
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = stddev * rng.normal();
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor({1, 1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape().str());
  }
  return node_->data[0];
}

Tensor Tensor::clone() const {
  return Tensor(shape(), node_->data, false);
}

void zero_grad(std::span<Tensor> tensors) {
  for (auto& t : tensors) t.zero_grad();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
  t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tape Tape::record(const Tensor& loss) {
  Tape tape;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{loss.node().get()};
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    if (!n->requires_grad || !seen.insert(n).second) continue;
    tape.nodes_.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const TensorNode* a, const TensorNode* b) {
              return a->seq < b->seq;
            });
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a 1x1 loss, got " +
                        (loss.defined() ? loss.shape().str() : "undefined"));
  }
  if (!loss.requires_grad()) return;
  Tape tape = Tape::record(loss);
  for (TensorNode* n : tape.nodes()) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  TensorNode* root = loss.node().get();
  root->ensure_grad()[0] += 1.0;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_shape(a.cols() == b.rows(), "matmul", a.shape(), b.shape());
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](TensorNode& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         gemm_nt(self.grad.data(), pb.data.data(),
                                 pa.ensure_grad().data(), m, n, k);
                       }
                       if (pb.requires_grad) {
                         gemm_tn(pa.data.data(), self.grad.data(),
                                 pb.ensure_grad().data(), m, k, n);
                       }
                     });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_shape(a.cols() == b.cols(), "matmul_nt", a.shape(), b.shape());
  const size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](TensorNode& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       // dA = dC * B, dB = dC^T * A
                       if (pa.requires_grad) {
                         gemm_nn(self.grad.data(), pb.data.data(),
                                 pa.ensure_grad().data(), m, n, k);
                       }
                       if (pb.requires_grad) {
                         gemm_tn(self.grad.data(), pa.data.data(),
                                 pb.ensure_grad().data(), m, n, k);
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  const size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto in = x.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return make_result({n, m}, std::move(out), {x.node()},
                     [m, n](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < m; ++i)
                         for (size_t j = 0; j < n; ++j)
                           g[i * n + j] += self.grad[j * m + i];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_shape(a.shape() == b.shape(), "add", a.shape(), b.shape());
  std::vector<double> out(a.size());
  const auto da = a.data(), db = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()},
                     [](TensorNode& self) {
                       for (auto& p : self.parents) {
                         if (!p->requires_grad) continue;
                         auto& g = p->ensure_grad();
                         for (size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                     });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_shape(bias.rows() == 1 && bias.cols() == x.cols(), "add_bias",
                x.shape(), bias.shape());
  const size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return make_result(x.shape(), std::move(out), {x.node(), bias.node()},
                     [m, n](TensorNode& self) {
                       auto& px = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (px.requires_grad) {
                         auto& g = px.ensure_grad();
                         for (size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.ensure_grad();
                         for (size_t i = 0; i < m; ++i)
                           for (size_t j = 0; j < n; ++j)
                             g[j] += self.grad[i * n + j];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_shape(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  std::vector<double> out(a.size());
  const auto da = a.data(), db = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return make_result(a.shape(), std::move(out), {a.node(), b.node()},
                     [](TensorNode& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         auto& g = pa.ensure_grad();
                         for (size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i] * pb.data[i];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.ensure_grad();
                         for (size_t i = 0; i < g.size(); ++i)
                           g[i] += self.grad[i] * pa.data[i];
                       }
                     });
}

Tensor scale(const Tensor& x, double s) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= s;
  return make_result(x.shape(), std::move(out), {x.node()},
                     [s](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < g.size(); ++i)
                         g[i] += s * self.grad[i];
                     });
}

Tensor sum(const Tensor& x) {
  const auto d = x.data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return make_result({1, 1}, {total}, {x.node()}, [](TensorNode& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(in[i]);
  return make_result(x.shape(), std::move(out), {x.node()},
                     [](TensorNode& self) {
                       auto& p = *self.parents[0];
                       auto& g = p.ensure_grad();
                       for (size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * gelu_derivative(p.data[i]);
                     });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(in[i]);
  return make_result(x.shape(), std::move(out), {x.node()},
                     [](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < g.size(); ++i) {
                         const double y = self.data[i];
                         g[i] += self.grad[i] * (1.0 - y * y);
                       }
                     });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_value(in[i]);
  return make_result(x.shape(), std::move(out), {x.node()},
                     [](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < g.size(); ++i) {
                         const double y = self.data[i];
                         g[i] += self.grad[i] * y * (1.0 - y);
                       }
                     });
}

namespace {

// Softmax over the first `width(i)` entries of each row; the rest are zero.
template <typename WidthFn>
Tensor masked_softmax(const Tensor& x, WidthFn width) {
  const size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n, 0.0);
  const auto in = x.data();
  for (size_t i = 0; i < m; ++i) {
    const size_t w = width(i);
    const double* row = in.data() + i * n;
    double* o = out.data() + i * n;
    const double mx = *std::max_element(row, row + w);
    double z = 0.0;
    for (size_t j = 0; j < w; ++j) {
      o[j] = std::exp(row[j] - mx);
      z += o[j];
    }
    for (size_t j = 0; j < w; ++j) o[j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x.node()},
                     [m, n](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < m; ++i) {
                         const double* y = self.data.data() + i * n;
                         const double* dy = self.grad.data() + i * n;
                         double dot = 0.0;
                         for (size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
                         for (size_t j = 0; j < n; ++j)
                           g[i * n + j] += y[j] * (dy[j] - dot);
                       }
                     });
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
  const size_t n = x.cols();
  return masked_softmax(x, [n](size_t) { return n; });
}

Tensor causal_softmax(const Tensor& x) {
  require_shape(x.rows() <= x.cols(), "causal_softmax", x.shape(), x.shape());
  return masked_softmax(x, [](size_t i) { return i + 1; });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const size_t m = x.rows(), n = x.cols();
  require_shape(gain.rows() == 1 && gain.cols() == n, "layer_norm", x.shape(),
                gain.shape());
  require_shape(bias.rows() == 1 && bias.cols() == n, "layer_norm", x.shape(),
                bias.shape());
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  std::vector<double> out(m * n);
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto rstd = std::make_shared<std::vector<double>>(m);
  const auto in = x.data();
  const auto gv = gain.data(), bv = bias.data();
  for (size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    double mean = 0.0;
    for (size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    for (size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * rs;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [m, n, xhat, rstd](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const double* dy = self.grad.data();
        if (pg.requires_grad) {
          auto& g = pg.ensure_grad();
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j)
              g[j] += dy[i * n + j] * (*xhat)[i * n + j];
        }
        if (pb.requires_grad) {
          auto& g = pb.ensure_grad();
          for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) g[j] += dy[i * n + j];
        }
        if (px.requires_grad) {
          auto& g = px.ensure_grad();
          std::vector<double> dxhat(n);
          for (size_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (size_t j = 0; j < n; ++j) {
              dxhat[j] = dy[i * n + j] * pg.data[j];
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * (*xhat)[i * n + j];
            }
            mean_d /= static_cast<double>(n);
            mean_dx /= static_cast<double>(n);
            for (size_t j = 0; j < n; ++j) {
              g[i * n + j] += (*rstd)[i] * (dxhat[j] - mean_d -
                                            (*xhat)[i * n + j] * mean_dx);
            }
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     const std::vector<bool>& mask) {
  const size_t t_len = logits.rows(), v = logits.cols();
  if (targets.size() != t_len || mask.size() != t_len) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets and " + std::to_string(mask.size()) +
                         " mask bits for logits " + logits.shape().str());
  }
  size_t count = 0;
  for (size_t i = 0; i < t_len; ++i) {
    if (!mask[i]) continue;
    ++count;
    if (targets[i] < 0 || static_cast<size_t>(targets[i]) >= v) {
      throw ContractError("cross_entropy: target id " +
                          std::to_string(targets[i]) + " outside vocabulary " +
                          std::to_string(v));
    }
  }
  if (count == 0) throw ContractError("cross_entropy: empty loss mask");

  const auto in = logits.data();
  auto probs = std::make_shared<std::vector<double>>(t_len * v, 0.0);
  double total = 0.0;
  for (size_t i = 0; i < t_len; ++i) {
    if (!mask[i]) continue;
    const double* row = in.data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[i]];
    for (size_t j = 0; j < v; ++j)
      (*probs)[i * v + j] = std::exp(row[j] - lse);
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<bool> msk = mask;
  const double inv = 1.0 / static_cast<double>(count);
  return make_result(
      {1, 1}, {total * inv}, {logits.node()},
      [probs, tgt = std::move(tgt), msk = std::move(msk), t_len, v,
       inv](TensorNode& self) {
        auto& g = self.parents[0]->ensure_grad();
        const double s = self.grad[0] * inv;
        for (size_t i = 0; i < t_len; ++i) {
          if (!msk[i]) continue;
          for (size_t j = 0; j < v; ++j) g[i * v + j] += s * (*probs)[i * v + j];
          g[i * v + tgt[i]] -= s;
        }
      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const size_t n = parts[0].cols();
  size_t m = 0;
  for (const auto& p : parts) {
    require_shape(p.cols() == n, "concat_rows", parts[0].shape(), p.shape());
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  return make_result({m, n}, std::move(out), std::move(parents),
                     [](TensorNode& self) {
                       size_t offset = 0;
                       for (auto& p : self.parents) {
                         const size_t len = p->data.size();
                         if (p->requires_grad) {
                           auto& g = p->ensure_grad();
                           for (size_t i = 0; i < len; ++i)
                             g[i] += self.grad[offset + i];
                         }
                         offset += len;
                       }
                     });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_rows(parts);
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const size_t m = parts[0].rows();
  size_t n = 0;
  for (const auto& p : parts) {
    require_shape(p.rows() == m, "concat_cols", parts[0].shape(), p.shape());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::vector<NodePtr> parents;
  size_t col = 0;
  for (const auto& p : parts) {
    const size_t w = p.cols();
    const auto d = p.data();
    for (size_t i = 0; i < m; ++i)
      std::copy_n(d.data() + i * w, w, out.data() + i * n + col);
    col += w;
    parents.push_back(p.node());
  }
  return make_result({m, n}, std::move(out), std::move(parents),
                     [m, n](TensorNode& self) {
                       size_t col = 0;
                       for (auto& p : self.parents) {
                         const size_t w = p->shape.cols;
                         if (p->requires_grad) {
                           auto& g = p->ensure_grad();
                           for (size_t i = 0; i < m; ++i)
                             for (size_t j = 0; j < w; ++j)
                               g[i * w + j] += self.grad[i * n + col + j];
                         }
                         col += w;
                       }
                     });
}

Tensor slice_rows(const Tensor& x, size_t begin, size_t end) {
  if (begin >= end || end > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         x.shape().str());
  }
  const size_t n = x.cols();
  std::vector<double> out(x.data().begin() + begin * n,
                          x.data().begin() + end * n);
  return make_result({end - begin, n}, std::move(out), {x.node()},
                     [begin, n](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < self.grad.size(); ++i)
                         g[begin * n + i] += self.grad[i];
                     });
}

Tensor slice_cols(const Tensor& x, size_t begin, size_t end) {
  if (begin >= end || end > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         x.shape().str());
  }
  const size_t m = x.rows(), n = x.cols(), w = end - begin;
  std::vector<double> out(m * w);
  const auto d = x.data();
  for (size_t i = 0; i < m; ++i)
    std::copy_n(d.data() + i * n + begin, w, out.data() + i * w);
  return make_result({m, w}, std::move(out), {x.node()},
                     [m, n, w, begin](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < m; ++i)
                         for (size_t j = 0; j < w; ++j)
                           g[i * n + begin + j] += self.grad[i * w + j];
                     });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  if (ids.empty()) throw ContractError("embedding_lookup: empty id list");
  const size_t v = table.rows(), e = table.cols();
  std::vector<double> out(ids.size() * e);
  const auto d = table.data();
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= v) {
      throw ContractError("token id " + std::to_string(ids[i]) +
                          " outside vocabulary of size " + std::to_string(v));
    }
    std::copy_n(d.data() + ids[i] * e, e, out.data() + i * e);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_result({ids.size(), e}, std::move(out), {table.node()},
                     [idv = std::move(idv), e](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < idv.size(); ++i)
                         for (size_t j = 0; j < e; ++j)
                           g[idv[i] * e + j] += self.grad[i * e + j];
                     });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout probability must be < 1");
  auto keep = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> out(x.size());
  const auto in = x.data();
  const double s = 1.0 / (1.0 - p);
  for (size_t i = 0; i < out.size(); ++i) {
    (*keep)[i] = rng.uniform() >= p ? s : 0.0;
    out[i] = in[i] * (*keep)[i];
  }
  return make_result(x.shape(), std::move(out), {x.node()},
                     [keep](TensorNode& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (size_t i = 0; i < g.size(); ++i)
                         g[i] += self.grad[i] * (*keep)[i];
                     });
}

}  // namespace clinprompt
