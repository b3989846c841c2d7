#include "dtx/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace dtx::nn {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Array::Array(std::vector<int> s, double fill) : shape(std::move(s)) {
  v.assign(shape_size(shape), fill);
}

Array Array::scalar(double x) {
  Array a({1});
  a.v[0] = x;
  return a;
}

Array Array::zeros_like(const Array& other) { return Array(other.shape); }

int Array::rows() const {
  if (shape.size() == 2) return shape[0];
  return 1;
}

int Array::cols() const {
  if (shape.size() == 2) return shape[1];
  if (shape.size() == 1) return shape[0];
  return 0;
}

double& Array::at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
double Array::at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }

void gemm_nn(const Array& a, const Array& b, Array* c, bool accumulate) {
  const int m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "gemm_nn inner dims");
  require(c->rows() == m && c->cols() == n, "gemm_nn output dims");
  if (!accumulate) std::fill(c->v.begin(), c->v.end(), 0.0);
  const double* pa = a.v.data();
  const double* pb = b.v.data();
  double* pc = c->v.data();
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      const double* brow = pb + static_cast<std::size_t>(kk) * n;
      double* crow = pc + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void gemm_nt(const Array& a, const Array& b, Array* c, bool accumulate) {
  const int m = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, "gemm_nt inner dims");
  require(c->rows() == m && c->cols() == n, "gemm_nt output dims");
  if (!accumulate) std::fill(c->v.begin(), c->v.end(), 0.0);
  const double* pa = a.v.data();
  const double* pb = b.v.data();
  double* pc = c->v.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = pb + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      pc[static_cast<std::size_t>(i) * n + j] += acc;
    }
  }
}

void gemm_tn(const Array& a, const Array& b, Array* c, bool accumulate) {
  const int k = a.rows(), m = a.cols(), n = b.cols();
  require(b.rows() == k, "gemm_tn inner dims");
  require(c->rows() == m && c->cols() == n, "gemm_tn output dims");
  if (!accumulate) std::fill(c->v.begin(), c->v.end(), 0.0);
  const double* pa = a.v.data();
  const double* pb = b.v.data();
  double* pc = c->v.data();
  for (int kk = 0; kk < k; ++kk) {
    const double* arow = pa + static_cast<std::size_t>(kk) * m;
    const double* brow = pb + static_cast<std::size_t>(kk) * n;
    for (int i = 0; i < m; ++i) {
      const double aki = arow[i];
      double* crow = pc + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
}

Array& Node::ensure_grad() {
  if (!grad_allocated) {
    grad = Array(value.shape);
    grad_allocated = true;
  }
  return grad;
}

Tensor Tensor::leaf(Array value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1);
  return Tensor(std::move(n));
}

const Array& Tensor::value() const { return node_->value; }
Array& Tensor::mutable_value() { return node_->value; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
Array& Tensor::grad() { return node_->ensure_grad(); }
bool Tensor::has_grad() const { return node_ && node_->grad_allocated; }

void Tensor::zero_grad() {
  if (node_ && node_->grad_allocated) {
    std::fill(node_->grad.v.begin(), node_->grad.v.end(), 0.0);
  }
}

double Tensor::item() const {
  require(node_->value.size() == 1, "item() on non-scalar");
  return node_->value.v[0];
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_op(Array value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->backward_fn = std::move(backward_fn);
    for (auto& p : parents) n->parents.push_back(p.node());
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  auto root = loss.node_;
  if (!root) throw NonScalarLoss("backward on undefined tensor");
  if (root->value.size() != 1) throw NonScalarLoss("loss must be scalar");
  if (root->backward_done) throw DoubleBackward("backward already ran for this loss");
  root->backward_done = true;
  if (!root->requires_grad) return;

  // Reverse creation order is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  root->ensure_grad().v[0] += 1.0;
  for (Node* n : order) {
    if (n->backward_fn && n->grad_allocated) n->backward_fn(*n);
  }
}

// --- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Array out({a.value().rows(), b.value().cols()});
  gemm_nn(a.value(), b.value(), &out, true);
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) gemm_nt(n.grad, bn->value, &an->ensure_grad(), true);
    if (bn->requires_grad) gemm_tn(an->value, n.grad, &bn->ensure_grad(), true);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Array out({a.value().rows(), b.value().rows()});
  gemm_nt(a.value(), b.value(), &out, true);
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) gemm_nn(n.grad, bn->value, &an->ensure_grad(), true);
    if (bn->requires_grad) gemm_tn(n.grad, an->value, &bn->ensure_grad(), true);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int m = x.value().rows(), out_dim = w.value().rows();
  require(w.value().cols() == x.value().cols(), "linear dims");
  Array out({m, out_dim});
  gemm_nt(x.value(), w.value(), &out, true);
  if (b.defined()) {
    require(static_cast<int>(b.value().size()) == out_dim, "linear bias dims");
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < out_dim; ++j) out.at(i, j) += b.value().v[static_cast<std::size_t>(j)];
    }
  }
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.defined() ? b.node() : nullptr;
  std::vector<Tensor> parents = b.defined() ? std::vector<Tensor>{x, w, b}
                                            : std::vector<Tensor>{x, w};
  return make_op(std::move(out), std::move(parents), [xn, wn, bn](Node& n) {
    if (xn->requires_grad) gemm_nn(n.grad, wn->value, &xn->ensure_grad(), true);
    if (wn->requires_grad) gemm_tn(n.grad, xn->value, &wn->ensure_grad(), true);
    if (bn && bn->requires_grad) {
      Array& g = bn->ensure_grad();
      const int rows = n.grad.rows(), cols = n.grad.cols();
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) g.v[static_cast<std::size_t>(j)] += n.grad.at(i, j);
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.value().same_shape(b.value()), "add shapes");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += b.value().v[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& n) {
    for (auto* p : {an.get(), bn.get()}) {
      if (!p->requires_grad) continue;
      Array& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i];
    }
  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  const int rows = m.value().rows(), cols = m.value().cols();
  require(static_cast<int>(v.value().size()) == cols, "add_rowvec dims");
  Array out = m.value();
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out.at(i, j) += v.value().v[static_cast<std::size_t>(j)];
  }
  auto mn = m.node();
  auto vn = v.node();
  return make_op(std::move(out), {m, v}, [mn, vn](Node& n) {
    if (mn->requires_grad) {
      Array& g = mn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i];
    }
    if (vn->requires_grad) {
      Array& g = vn->ensure_grad();
      const int rows = n.grad.rows(), cols = n.grad.cols();
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) g.v[static_cast<std::size_t>(j)] += n.grad.at(i, j);
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.value().same_shape(b.value()), "mul shapes");
  Array out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= b.value().v[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn](Node& n) {
    if (an->requires_grad) {
      Array& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i] * bn->value.v[i];
    }
    if (bn->requires_grad) {
      Array& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i] * an->value.v[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  Array out = a.value();
  for (auto& x : out.v) x *= c;
  auto an = a.node();
  return make_op(std::move(out), {a}, [an, c](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += c * n.grad.v[i];
  });
}

Tensor softmax_rows(const Tensor& a) {
  Array out = a.value();
  const int rows = out.rows(), cols = out.cols();
  for (int i = 0; i < rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < cols; ++j) mx = std::max(mx, out.at(i, j));
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      out.at(i, j) = std::exp(out.at(i, j) - mx);
      z += out.at(i, j);
    }
    for (int j = 0; j < cols; ++j) out.at(i, j) /= z;
  }
  auto an = a.node();
  return make_op(std::move(out), {a}, [an](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    const int rows = n.value.rows(), cols = n.value.cols();
    for (int i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
      for (int j = 0; j < cols; ++j) {
        g.at(i, j) += n.value.at(i, j) * (n.grad.at(i, j) - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const int rows = x.value().rows(), cols = x.value().cols();
  require(static_cast<int>(gain.value().size()) == cols, "layer_norm gain dims");
  require(static_cast<int>(bias.value().size()) == cols, "layer_norm bias dims");
  Array out({rows, cols});
  Array xhat({rows, cols});
  Array inv_std({rows});
  for (int i = 0; i < rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += x.value().at(i, j);
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = x.value().at(i, j) - mean;
      var += d * d;
    }
    var /= cols;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std.v[static_cast<std::size_t>(i)] = istd;
    for (int j = 0; j < cols; ++j) {
      const double xh = (x.value().at(i, j) - mean) * istd;
      xhat.at(i, j) = xh;
      out.at(i, j) = xh * gain.value().v[static_cast<std::size_t>(j)] +
                     bias.value().v[static_cast<std::size_t>(j)];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_op(std::move(out), {x, gain, bias},
                 [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
    const int rows = n.value.rows(), cols = n.value.cols();
    if (gn->requires_grad) {
      Array& g = gn->ensure_grad();
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
          g.v[static_cast<std::size_t>(j)] += n.grad.at(i, j) * xhat.at(i, j);
        }
      }
    }
    if (bn->requires_grad) {
      Array& g = bn->ensure_grad();
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) g.v[static_cast<std::size_t>(j)] += n.grad.at(i, j);
      }
    }
    if (xn->requires_grad) {
      Array& g = xn->ensure_grad();
      for (int i = 0; i < rows; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int j = 0; j < cols; ++j) {
          const double dxhat = n.grad.at(i, j) * gn->value.v[static_cast<std::size_t>(j)];
          mean_dxhat += dxhat;
          mean_dxhat_xhat += dxhat * xhat.at(i, j);
        }
        mean_dxhat /= cols;
        mean_dxhat_xhat /= cols;
        const double istd = inv_std.v[static_cast<std::size_t>(i)];
        for (int j = 0; j < cols; ++j) {
          const double dxhat = n.grad.at(i, j) * gn->value.v[static_cast<std::size_t>(j)];
          g.at(i, j) += istd * (dxhat - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
        }
      }
    }
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  const int cols = table.value().cols();
  Array out({static_cast<int>(ids.size()), cols});
  for (std::size_t p = 0; p < ids.size(); ++p) {
    require(ids[p] >= 0 && ids[p] < table.value().rows(), "embedding id out of range");
    for (int j = 0; j < cols; ++j) {
      out.at(static_cast<int>(p), j) = table.value().at(ids[p], j);
    }
  }
  auto tn = table.node();
  return make_op(std::move(out), {table}, [tn, ids](Node& n) {
    if (!tn->requires_grad) return;
    Array& g = tn->ensure_grad();
    const int cols = n.value.cols();
    for (std::size_t p = 0; p < ids.size(); ++p) {
      for (int j = 0; j < cols; ++j) {
        g.at(ids[p], j) += n.grad.at(static_cast<int>(p), j);
      }
    }
  });
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& targets) {
  const int rows = logits.value().rows(), cols = logits.value().cols();
  require(static_cast<int>(targets.size()) == rows, "cross_entropy target count");
  Array probs({rows, cols});
  double loss = 0.0;
  for (int i = 0; i < rows; ++i) {
    require(targets[static_cast<std::size_t>(i)] >= 0 &&
                targets[static_cast<std::size_t>(i)] < cols,
            "cross_entropy target id");
    double mx = -1e300;
    for (int j = 0; j < cols; ++j) mx = std::max(mx, logits.value().at(i, j));
    double z = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double e = std::exp(logits.value().at(i, j) - mx);
      probs.at(i, j) = e;
      z += e;
    }
    for (int j = 0; j < cols; ++j) probs.at(i, j) /= z;
    loss += mx + std::log(z) - logits.value().at(i, targets[static_cast<std::size_t>(i)]);
  }
  auto ln = logits.node();
  return make_op(Array::scalar(loss), {logits},
                 [ln, targets, probs = std::move(probs)](Node& n) {
    if (!ln->requires_grad) return;
    Array& g = ln->ensure_grad();
    const double up = n.grad.v[0];
    const int rows = probs.rows(), cols = probs.cols();
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        const double ind = j == targets[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        g.at(i, j) += up * (probs.at(i, j) - ind);
      }
    }
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require(a.value().cols() == b.value().cols(), "concat_rows widths");
  const int ra = a.value().rows(), rb = b.value().rows(), cols = a.value().cols();
  Array out({ra + rb, cols});
  std::copy(a.value().v.begin(), a.value().v.end(), out.v.begin());
  std::copy(b.value().v.begin(), b.value().v.end(),
            out.v.begin() + static_cast<std::ptrdiff_t>(a.value().size()));
  auto an = a.node();
  auto bn = b.node();
  return make_op(std::move(out), {a, b}, [an, bn, ra](Node& n) {
    const int cols = n.value.cols();
    if (an->requires_grad) {
      Array& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i];
    }
    if (bn->requires_grad) {
      Array& g = bn->ensure_grad();
      const std::size_t off = static_cast<std::size_t>(ra) * cols;
      for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[off + i];
    }
  });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
  require(0 <= r0 && r0 < r1 && r1 <= a.value().rows(), "slice_rows range");
  const int cols = a.value().cols();
  Array out({r1 - r0, cols});
  std::copy(a.value().v.begin() + static_cast<std::ptrdiff_t>(r0) * cols,
            a.value().v.begin() + static_cast<std::ptrdiff_t>(r1) * cols, out.v.begin());
  auto an = a.node();
  return make_op(std::move(out), {a}, [an, r0](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    const int cols = n.value.cols();
    const std::size_t off = static_cast<std::size_t>(r0) * cols;
    for (std::size_t i = 0; i < n.grad.size(); ++i) g.v[off + i] += n.grad.v[i];
  });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require(0 <= c0 && c0 < c1 && c1 <= a.value().cols(), "slice_cols range");
  const int rows = a.value().rows();
  Array out({rows, c1 - c0});
  for (int i = 0; i < rows; ++i) {
    for (int j = c0; j < c1; ++j) out.at(i, j - c0) = a.value().at(i, j);
  }
  auto an = a.node();
  return make_op(std::move(out), {a}, [an, c0](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    const int rows = n.value.rows(), w = n.value.cols();
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < w; ++j) g.at(i, c0 + j) += n.grad.at(i, j);
    }
  });
}

Tensor tanh_op(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.v) x = std::tanh(x);
  auto an = a.node();
  return make_op(std::move(out), {a}, [an](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g.v[i] += n.grad.v[i] * (1.0 - n.value.v[i] * n.value.v[i]);
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
}

Tensor gelu(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.v) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    x = 0.5 * x * (1.0 + std::tanh(u));
  }
  auto an = a.node();
  return make_op(std::move(out), {a}, [an](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = an->value.v[i];
      const double u = kGeluC * (x + 0.044715 * x * x * x);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
      g.v[i] += n.grad.v[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
    }
  });
}

Tensor exp_op(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.v) x = std::exp(x);
  auto an = a.node();
  return make_op(std::move(out), {a}, [an](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i] * n.value.v[i];
  });
}

Tensor log_op(const Tensor& a) {
  Array out = a.value();
  for (auto& x : out.v) x = std::log(x);
  auto an = a.node();
  return make_op(std::move(out), {a}, [an](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += n.grad.v[i] / an->value.v[i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value().v) s += x;
  auto an = a.node();
  return make_op(Array::scalar(s), {a}, [an](Node& n) {
    if (!an->requires_grad) return;
    Array& g = an->ensure_grad();
    for (auto& x : g.v) x += n.grad.v[0];
  });
}

Tensor mmd_ustat(const Tensor& q, const Tensor& p, double sigma2) {
  const int n = q.value().rows(), m = p.value().rows(), d = q.value().cols();
  require(p.value().cols() == d, "mmd dims");
  require(n >= 2 && m >= 2, "mmd needs at least two samples per set");

  auto kernel = [sigma2](const double* a, const double* b, int dim) {
    double sq = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double diff = a[j] - b[j];
      sq += diff * diff;
    }
    return std::exp(-sq / (2.0 * sigma2));
  };

  const double* pq = q.value().v.data();
  const double* pp = p.value().v.data();
  double qq = 0.0, ppv = 0.0, qp = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j) qq += kernel(pq + static_cast<std::size_t>(i) * d,
                               pq + static_cast<std::size_t>(j) * d, d);
    }
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) ppv += kernel(pp + static_cast<std::size_t>(i) * d,
                                pp + static_cast<std::size_t>(j) * d, d);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      qp += kernel(pq + static_cast<std::size_t>(i) * d, pp + static_cast<std::size_t>(j) * d, d);
    }
  }
  const double value = qq / (static_cast<double>(n) * (n - 1)) +
                       ppv / (static_cast<double>(m) * (m - 1)) -
                       2.0 * qp / (static_cast<double>(n) * m);

  auto qn = q.node();
  auto pn = p.node();
  return make_op(Array::scalar(value), {q, p}, [qn, pn, sigma2, n, m, d, kernel](Node& node) {
    if (!qn->requires_grad) return;
    Array& g = qn->ensure_grad();
    const double up = node.grad.v[0];
    const double* pq = qn->value.v.data();
    const double* pp = pn->value.v.data();
    for (int i = 0; i < n; ++i) {
      const double* qi = pq + static_cast<std::size_t>(i) * d;
      double* gi = g.v.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* qj = pq + static_cast<std::size_t>(j) * d;
        // q_i appears on both sides of the symmetric kernel sum.
        const double coef =
            up * 2.0 * kernel(qi, qj, d) / (static_cast<double>(n) * (n - 1)) * (-1.0 / sigma2);
        for (int c = 0; c < d; ++c) gi[c] += coef * (qi[c] - qj[c]);
      }
      for (int j = 0; j < m; ++j) {
        const double* pj = pp + static_cast<std::size_t>(j) * d;
        const double coef =
            up * -2.0 * kernel(qi, pj, d) / (static_cast<double>(n) * m) * (-1.0 / sigma2);
        for (int c = 0; c < d; ++c) gi[c] += coef * (qi[c] - pj[c]);
      }
    }
  });
}

GradCheckResult finite_difference_check(const std::function<Tensor()>& build_loss,
                                        const std::vector<Tensor>& leaves,
                                        int coords_per_leaf, double h,
                                        std::mt19937_64& rng) {
  for (auto leaf : leaves) leaf.zero_grad();
  {
    Tensor loss = build_loss();
    backward(loss);
  }
  std::vector<Array> analytic;
  for (auto leaf : leaves) analytic.push_back(leaf.grad());

  auto loss_value = [&]() {
    NoGradGuard guard;
    return build_loss().item();
  };

  GradCheckResult result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    Array& w = leaf.mutable_value();
    const int total = static_cast<int>(w.size());
    const int n_coords = std::min(coords_per_leaf, total);
    for (int c = 0; c < n_coords; ++c) {
      const std::size_t i =
          n_coords == total ? static_cast<std::size_t>(c)
                            : static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(total));
      const double saved = w.v[i];
      w.v[i] = saved + h;
      const double up = loss_value();
      w.v[i] = saved - h;
      const double down = loss_value();
      w.v[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[li].v[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.coords_checked;
    }
  }
  for (auto leaf : leaves) leaf.zero_grad();
  return result;
}

// --- parameters --------------------------------------------------------------

Tensor ParamStore::create(const std::string& name, Array init) {
  if (has(name)) throw std::runtime_error("duplicate parameter: " + name);
  Tensor t = Tensor::leaf(std::move(init), true);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw std::runtime_error("unknown parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return true;
  }
  return false;
}

std::size_t ParamStore::total_parameters() const {
  std::size_t total = 0;
  for (const auto& [n, t] : items_) total += t.value().size();
  return total;
}

void ParamStore::zero_grads() {
  for (auto& [n, t] : items_) t.zero_grad();
}

AdamW::AdamW(ParamStore* params, AdamWConfig config) : params_(params), config_(config) {
  for (const auto& [name, t] : params_->items()) {
    m_.push_back(Array(t.value().shape));
    v_.push_back(Array(t.value().shape));
  }
}

void AdamW::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, step_);
  const double bc2 = 1.0 - std::pow(config_.beta2, step_);
  std::size_t idx = 0;
  for (auto& [name, t] : const_cast<std::vector<std::pair<std::string, Tensor>>&>(
           params_->items())) {
    Array& w = t.mutable_value();
    Array& g = t.grad();
    Array& m = m_[idx];
    Array& v = v_[idx];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m.v[i] = config_.beta1 * m.v[i] + (1.0 - config_.beta1) * g.v[i];
      v.v[i] = config_.beta2 * v.v[i] + (1.0 - config_.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      // Decoupled decay: applied to the weight, never routed through moments.
      w.v[i] -= config_.learning_rate *
                (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * w.v[i]);
    }
    t.zero_grad();
    ++idx;
  }
}

}  // namespace dtx::nn
