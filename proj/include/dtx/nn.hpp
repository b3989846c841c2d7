// nn.hpp -- dense f64 arrays, reverse-mode automatic differentiation over
// coarse tensor ops, and the decoupled-weight-decay Adam optimizer.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtx::nn {

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};
class NonScalarLoss : public std::runtime_error {
 public:
  explicit NonScalarLoss(const std::string& what) : std::runtime_error(what) {}
};
class DoubleBackward : public std::runtime_error {
 public:
  explicit DoubleBackward(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major buffer. Rank 1 arrays behave as row vectors, rank 2 as
// matrices; scalars are shape {1}.
struct Array {
  std::vector<int> shape;
  std::vector<double> v;

  Array() = default;
  explicit Array(std::vector<int> s, double fill = 0.0);
  static Array scalar(double x);
  static Array zeros_like(const Array& other);

  std::size_t size() const { return v.size(); }
  int rows() const;
  int cols() const;
  double& at(int r, int c);
  double at(int r, int c) const;
  bool same_shape(const Array& other) const { return shape == other.shape; }
};

// Raw kernels; C must be preshaped. Used by forward values and backward rules.
void gemm_nn(const Array& a, const Array& b, Array* c, bool accumulate);  // C (+)= A B
void gemm_nt(const Array& a, const Array& b, Array* c, bool accumulate);  // C (+)= A B^T
void gemm_tn(const Array& a, const Array& b, Array* c, bool accumulate);  // C (+)= A^T B

struct Node;

class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Array value, bool requires_grad);
  static Tensor constant(Array value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Array& value() const;
  Array& mutable_value();  // leaves only; invalidates nothing mid-graph
  bool requires_grad() const;
  Array& grad();  // allocated (zeroed) on first access
  bool has_grad() const;
  void zero_grad();
  double item() const;  // scalar value

  std::shared_ptr<Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_op(Array value, std::vector<Tensor> parents,
                        std::function<void(Node&)> backward_fn);
  friend void backward(const Tensor& loss);
};

struct Node {
  Array value;
  Array grad;
  bool requires_grad{false};
  bool grad_allocated{false};
  bool backward_done{false};
  std::uint64_t id{0};
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Array& ensure_grad();
};

// Recording can be suspended for sampling passes; ops then propagate values
// only and gradients never flow.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Tensor make_op(Array value, std::vector<Tensor> parents,
               std::function<void(Node&)> backward_fn);

// Populates gradients of every reachable requires-grad node; leaf gradients
// accumulate across calls until explicitly zeroed.
void backward(const Tensor& loss);

// --- primitive ops ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
// x [m,in] * w [out,in]^T + b [out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // broadcast over rows
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
// Sum over rows of -log softmax(logits)[target]; scalar.
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& targets);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor tanh_op(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor sum(const Tensor& a);  // scalar

// Unbiased U-statistic MMD between sample rows of q and p under a Gaussian
// kernel exp(-|a-b|^2 / (2 sigma2)); gradients flow to q only.
Tensor mmd_ustat(const Tensor& q, const Tensor& p, double sigma2);

// --- gradient checking -------------------------------------------------------

struct GradCheckResult {
  double max_rel_error{0.0};
  int coords_checked{0};
};

// Central-difference probe of `build_loss` (which must rebuild the graph from
// the given leaves on every call) against the recorded backward pass. Checks
// up to `coords_per_leaf` randomly sampled coordinates per leaf.
GradCheckResult finite_difference_check(const std::function<Tensor()>& build_loss,
                                        const std::vector<Tensor>& leaves,
                                        int coords_per_leaf, double h,
                                        std::mt19937_64& rng);

// --- parameters and optimizer ----------------------------------------------

class ParamStore {
 public:
  Tensor create(const std::string& name, Array init);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t total_parameters() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// First/second moment buffers per parameter plus the shared step counter.
class AdamW {
 public:
  AdamW(ParamStore* params, AdamWConfig config);

  // Bias-corrected moment update with decay applied directly to weights;
  // gradients are zeroed afterwards.
  void step();
  int step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  ParamStore* params_;
  AdamWConfig config_;
  int step_{0};
  std::vector<Array> m_;
  std::vector<Array> v_;
};

}  // namespace dtx::nn
