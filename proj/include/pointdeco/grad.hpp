#pragma once

// Reverse-mode automatic differentiation over Mat, specialised to the handful
// of primitives the decoration networks need. A Tape records nodes in creation
// order; backward() walks them in reverse, which is a valid topological order
// because every operand must already exist when an op is recorded.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pointdeco/common.hpp"
#include "pointdeco/tensor.hpp"

namespace pointdeco {

enum class OpKind {
  Leaf,
  MatMul,
  BiasAdd,
  Relu,
  MaxPoolRows,
  TileRows,
  ConcatCols,
  Add,
  Scale,
  SumAll,
  SoftmaxCE,
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::BiasAdd: return "bias_add";
    case OpKind::Relu: return "relu";
    case OpKind::MaxPoolRows: return "maxpool_rows";
    case OpKind::TileRows: return "tile_rows";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::Add: return "add";
    case OpKind::Scale: return "scale";
    case OpKind::SumAll: return "sum_all";
    case OpKind::SoftmaxCE: return "softmax_ce";
  }
  return "?";
}

inline OpKind op_kind_from_name(const std::string& s) {
  for (OpKind k : {OpKind::Leaf, OpKind::MatMul, OpKind::BiasAdd, OpKind::Relu,
                   OpKind::MaxPoolRows, OpKind::TileRows, OpKind::ConcatCols,
                   OpKind::Add, OpKind::Scale, OpKind::SumAll,
                   OpKind::SoftmaxCE}) {
    if (s == op_kind_name(k)) return k;
  }
  throw Error(ErrorCode::InvalidClass, "unknown primitive '" + s + "'");
}

// Test hook: multiplies the backward contribution of one primitive kind by
// `scale`, so gradient self-checks can prove they would catch a regression.
struct FaultInjection {
  OpKind op = OpKind::MatMul;
  double scale = 1.0;
};

class Tape {
 public:
  using Id = int;

  // Records an input matrix. If grad_sink is non-null, backward() accumulates
  // the leaf's gradient into it (shapes must match).
  Id leaf(Mat value, Mat* grad_sink = nullptr) {
    if (grad_sink != nullptr) {
      require_shape(grad_sink->rows == value.rows &&
                        grad_sink->cols == value.cols,
                    "leaf gradient sink shape");
    }
    Node n;
    n.op = OpKind::Leaf;
    n.val = std::move(value);
    n.sink = grad_sink;
    return push(std::move(n));
  }

  Id matmul(Id a, Id b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    require_shape(A.cols == B.rows, "matmul inner dimensions");
    Node n;
    n.op = OpKind::MatMul;
    n.a = a;
    n.b = b;
    n.val = Mat(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int k = 0; k < A.cols; ++k) {
        const double aik = A.at(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < B.cols; ++j) {
          n.val.at(i, j) += aik * B.at(k, j);
        }
      }
    }
    return push(std::move(n));
  }

  // Adds a 1 x c row vector to every row of an n x c matrix.
  Id bias_add(Id a, Id bias) {
    const Mat& A = value(a);
    const Mat& B = value(bias);
    require_shape(B.rows == 1 && B.cols == A.cols, "bias_add operand shapes");
    Node n;
    n.op = OpKind::BiasAdd;
    n.a = a;
    n.b = bias;
    n.val = A;
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) n.val.at(i, j) += B.at(0, j);
    }
    return push(std::move(n));
  }

  Id relu(Id a) {
    Node n;
    n.op = OpKind::Relu;
    n.a = a;
    n.val = value(a);
    for (double& v : n.val.d) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
  }

  // Column-wise max over rows: n x c -> 1 x c. Ties keep the lowest row
  // index, so the subgradient is deterministic.
  Id maxpool_rows(Id a) {
    const Mat& A = value(a);
    require_shape(A.rows >= 1, "maxpool_rows needs at least one row");
    Node n;
    n.op = OpKind::MaxPoolRows;
    n.a = a;
    n.val = Mat(1, A.cols);
    n.argmax.assign(A.cols, 0);
    for (int j = 0; j < A.cols; ++j) {
      double best = A.at(0, j);
      int best_row = 0;
      for (int i = 1; i < A.rows; ++i) {
        if (A.at(i, j) > best) {
          best = A.at(i, j);
          best_row = i;
        }
      }
      n.val.at(0, j) = best;
      n.argmax[j] = best_row;
    }
    return push(std::move(n));
  }

  // Repeats a 1 x c row n times.
  Id tile_rows(Id a, int rows) {
    const Mat& A = value(a);
    require_shape(A.rows == 1 && rows >= 1, "tile_rows takes a single row");
    Node n;
    n.op = OpKind::TileRows;
    n.a = a;
    n.val = Mat(rows, A.cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = A.at(0, j);
    }
    return push(std::move(n));
  }

  Id concat_cols(Id a, Id b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    require_shape(A.rows == B.rows, "concat_cols row counts");
    Node n;
    n.op = OpKind::ConcatCols;
    n.a = a;
    n.b = b;
    n.val = Mat(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < A.cols; ++j) n.val.at(i, j) = A.at(i, j);
      for (int j = 0; j < B.cols; ++j) n.val.at(i, A.cols + j) = B.at(i, j);
    }
    return push(std::move(n));
  }

  Id add(Id a, Id b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    require_shape(A.same_shape(B), "add operand shapes");
    Node n;
    n.op = OpKind::Add;
    n.a = a;
    n.b = b;
    n.val = A;
    for (std::size_t i = 0; i < n.val.d.size(); ++i) n.val.d[i] += B.d[i];
    return push(std::move(n));
  }

  Id scale(Id a, double s) {
    Node n;
    n.op = OpKind::Scale;
    n.a = a;
    n.scalar = s;
    n.val = value(a);
    for (double& v : n.val.d) v *= s;
    return push(std::move(n));
  }

  // Sum of all entries, as a 1 x 1 matrix.
  Id sum_all(Id a) {
    Node n;
    n.op = OpKind::SumAll;
    n.a = a;
    n.val = Mat(1, 1);
    for (double v : value(a).d) n.val.at(0, 0) += v;
    return push(std::move(n));
  }

  // Mean softmax cross-entropy over rows; labels[i] indexes the true column
  // of row i. Produces a 1 x 1 loss node.
  Id softmax_ce(Id logits, std::vector<int> labels) {
    const Mat& L = value(logits);
    require_shape(static_cast<int>(labels.size()) == L.rows,
                  "softmax_ce label count");
    for (int lab : labels) {
      require_shape(lab >= 0 && lab < L.cols, "softmax_ce label range");
    }
    Node n;
    n.op = OpKind::SoftmaxCE;
    n.a = logits;
    n.labels = std::move(labels);
    n.probs = Mat(L.rows, L.cols);
    double total = 0.0;
    for (int i = 0; i < L.rows; ++i) {
      double mx = L.at(i, 0);
      for (int j = 1; j < L.cols; ++j) mx = std::max(mx, L.at(i, j));
      double denom = 0.0;
      for (int j = 0; j < L.cols; ++j) {
        const double e = std::exp(L.at(i, j) - mx);
        n.probs.at(i, j) = e;
        denom += e;
      }
      for (int j = 0; j < L.cols; ++j) n.probs.at(i, j) /= denom;
      total += -std::log(n.probs.at(i, n.labels[i]));
    }
    n.val = Mat(1, 1);
    n.val.at(0, 0) = total / L.rows;
    return push(std::move(n));
  }

  const Mat& value(Id id) const { return nodes_.at(id).val; }
  const Mat& grad(Id id) const { return nodes_.at(id).grad; }

  void set_fault(std::optional<FaultInjection> fault) { fault_ = fault; }

  // Seeds d(root) = 1 (root must be 1 x 1) and accumulates gradients through
  // every recorded node, newest to oldest. Leaf sinks receive += updates.
  void backward(Id root) {
    require_shape(value(root).rows == 1 && value(root).cols == 1,
                  "backward root must be scalar");
    for (auto& n : nodes_) {
      n.grad = Mat(n.val.rows, n.val.cols);
    }
    nodes_[root].grad.at(0, 0) = 1.0;

    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      const double f = fault_scale(n.op);
      switch (n.op) {
        case OpKind::Leaf:
          if (n.sink != nullptr) {
            for (std::size_t i = 0; i < n.grad.d.size(); ++i) {
              n.sink->d[i] += n.grad.d[i];
            }
          }
          break;
        case OpKind::MatMul: {
          const Mat& A = nodes_[n.a].val;
          const Mat& B = nodes_[n.b].val;
          Mat& dA = nodes_[n.a].grad;
          Mat& dB = nodes_[n.b].grad;
          for (int i = 0; i < A.rows; ++i) {
            for (int j = 0; j < B.cols; ++j) {
              const double g = n.grad.at(i, j) * f;
              if (g == 0.0) continue;
              for (int k = 0; k < A.cols; ++k) {
                dA.at(i, k) += g * B.at(k, j);
                dB.at(k, j) += g * A.at(i, k);
              }
            }
          }
          break;
        }
        case OpKind::BiasAdd: {
          Mat& dA = nodes_[n.a].grad;
          Mat& dB = nodes_[n.b].grad;
          for (int i = 0; i < n.grad.rows; ++i) {
            for (int j = 0; j < n.grad.cols; ++j) {
              const double g = n.grad.at(i, j) * f;
              dA.at(i, j) += g;
              dB.at(0, j) += g;
            }
          }
          break;
        }
        case OpKind::Relu: {
          const Mat& A = nodes_[n.a].val;
          Mat& dA = nodes_[n.a].grad;
          for (std::size_t i = 0; i < dA.d.size(); ++i) {
            if (A.d[i] > 0.0) dA.d[i] += n.grad.d[i] * f;
          }
          break;
        }
        case OpKind::MaxPoolRows: {
          Mat& dA = nodes_[n.a].grad;
          for (int j = 0; j < n.grad.cols; ++j) {
            dA.at(n.argmax[j], j) += n.grad.at(0, j) * f;
          }
          break;
        }
        case OpKind::TileRows: {
          Mat& dA = nodes_[n.a].grad;
          for (int i = 0; i < n.grad.rows; ++i) {
            for (int j = 0; j < n.grad.cols; ++j) {
              dA.at(0, j) += n.grad.at(i, j) * f;
            }
          }
          break;
        }
        case OpKind::ConcatCols: {
          Mat& dA = nodes_[n.a].grad;
          Mat& dB = nodes_[n.b].grad;
          for (int i = 0; i < n.grad.rows; ++i) {
            for (int j = 0; j < dA.cols; ++j) {
              dA.at(i, j) += n.grad.at(i, j) * f;
            }
            for (int j = 0; j < dB.cols; ++j) {
              dB.at(i, j) += n.grad.at(i, dA.cols + j) * f;
            }
          }
          break;
        }
        case OpKind::Add: {
          Mat& dA = nodes_[n.a].grad;
          Mat& dB = nodes_[n.b].grad;
          for (std::size_t i = 0; i < n.grad.d.size(); ++i) {
            dA.d[i] += n.grad.d[i] * f;
            dB.d[i] += n.grad.d[i] * f;
          }
          break;
        }
        case OpKind::Scale: {
          Mat& dA = nodes_[n.a].grad;
          for (std::size_t i = 0; i < n.grad.d.size(); ++i) {
            dA.d[i] += n.grad.d[i] * n.scalar * f;
          }
          break;
        }
        case OpKind::SumAll: {
          Mat& dA = nodes_[n.a].grad;
          const double g = n.grad.at(0, 0) * f;
          for (double& v : dA.d) v += g;
          break;
        }
        case OpKind::SoftmaxCE: {
          Mat& dA = nodes_[n.a].grad;
          const double g = n.grad.at(0, 0) * f / n.probs.rows;
          for (int i = 0; i < n.probs.rows; ++i) {
            for (int j = 0; j < n.probs.cols; ++j) {
              const double onehot = j == n.labels[i] ? 1.0 : 0.0;
              dA.at(i, j) += g * (n.probs.at(i, j) - onehot);
            }
          }
          break;
        }
      }
    }
  }

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    Id a = -1;
    Id b = -1;
    double scalar = 1.0;
    Mat val;
    Mat grad;
    Mat probs;               // SoftmaxCE only
    std::vector<int> labels;   // SoftmaxCE only
    std::vector<int> argmax;   // MaxPoolRows only
    Mat* sink = nullptr;       // Leaf only
  };

  Id push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  double fault_scale(OpKind op) const {
    return fault_ && fault_->op == op ? fault_->scale : 1.0;
  }

  std::vector<Node> nodes_;
  std::optional<FaultInjection> fault_;
};

}  // namespace pointdeco
