#pragma once

#include <cstdint>
#include <vector>

#include "pathweaver/numcore/autograd.hpp"
#include "pathweaver/numcore/rng.hpp"

// Differentiable operations on 2-D tensors. Shape violations throw
// DimensionError.
namespace pathweaver::num {

Var matmul(const Var& a, const Var& b);
// x[n x in] * w[in x out] + b[1 x out]
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// a[n x m] + row[1 x m] broadcast over rows.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, Real s);
Var one_minus(const Var& a);

Var sigmoid(const Var& x);
Var relu(const Var& x);
// tanh approximation.
Var gelu(const Var& x);
Var softmax(const Var& x);  // along each row
Var layer_norm(const Var& x, const Var& gain, const Var& bias, Real eps = Real(1e-5));

Var sum(const Var& x);
Var mean(const Var& x);
// [n x 1] Euclidean norm of each row. The subgradient at a zero row is 0.
Var row_norm(const Var& x);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const Var& a, const Var& b);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
// Output row i is x[index[i]], or a zero row when index[i] < 0.
Var gather_rows(const Var& x, const std::vector<std::int64_t>& index);

// Mean negative log-likelihood over rows whose target != ignore_index.
// Throws ContractError when every row is ignored.
Var cross_entropy(const Var& logits, const std::vector<std::int64_t>& targets, std::int64_t ignore_index);

// Inverted dropout; identity when p == 0.
Var dropout(const Var& x, Real p, Rng& rng);

struct AttentionOptions {
  std::size_t heads = 1;
  bool causal = false;
  // Per-key visibility (empty = all visible). Masked keys get exactly zero
  // weight; a query with no visible key attends to nothing and outputs zeros.
  const std::vector<std::uint8_t>* key_mask = nullptr;
  // When set, receives one [Lq x Lk] probability matrix per head.
  std::vector<Tensor>* probe = nullptr;
};

// Scaled dot-product multi-head attention over already-projected
// q[Lq x d], k[Lk x d], v[Lk x d]; heads split the feature axis.
Var attention(const Var& q, const Var& k, const Var& v, const AttentionOptions& opts);

}  // namespace pathweaver::num
