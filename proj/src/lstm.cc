#include "clinprompt/lstm.h"

#include "clinprompt/error.h"
#include "clinprompt/rng.h"

namespace clinprompt {
namespace {

// Hidden states for rows of `seq` visited in `order`, returned in row order.
std::vector<Tensor> run_direction(const Tensor& seq, const LstmWeights& w,
                                  bool reverse) {
  const size_t len = seq.rows();
  const size_t h = w.hidden_size();
  if (w.w_input.rows() != seq.cols() || w.w_input.cols() != 4 * h ||
      w.w_hidden.cols() != 4 * h || w.bias.cols() != 4 * h) {
    throw DimensionError("lstm: weights " + w.w_input.shape().str() + "/" +
                         w.w_hidden.shape().str() +
                         " do not fit input " + seq.shape().str());
  }
  // Input projections for all steps at once.
  const Tensor projected = add_bias(matmul(seq, w.w_input), w.bias);
  Tensor hidden = Tensor::zeros(1, h);
  Tensor cell = Tensor::zeros(1, h);
  std::vector<Tensor> out(len);
  for (size_t k = 0; k < len; ++k) {
    const size_t t = reverse ? len - 1 - k : k;
    const Tensor gates =
        add(slice_rows(projected, t, t + 1), matmul(hidden, w.w_hidden));
    const Tensor in_gate = sigmoid(slice_cols(gates, 0, h));
    const Tensor forget_gate = sigmoid(slice_cols(gates, h, 2 * h));
    const Tensor candidate = tanh(slice_cols(gates, 2 * h, 3 * h));
    const Tensor out_gate = sigmoid(slice_cols(gates, 3 * h, 4 * h));
    cell = add(mul(forget_gate, cell), mul(in_gate, candidate));
    hidden = mul(out_gate, tanh(cell));
    out[t] = hidden;
  }
  return out;
}

}  // namespace

LstmWeights LstmWeights::zeros(size_t d_in, size_t hidden, bool requires_grad) {
  return {Tensor::zeros(d_in, 4 * hidden, requires_grad),
          Tensor::zeros(hidden, 4 * hidden, requires_grad),
          Tensor::zeros(1, 4 * hidden, requires_grad)};
}

LstmWeights LstmWeights::random(size_t d_in, size_t hidden, double stddev,
                                Rng& rng, bool requires_grad) {
  return {Tensor::randn(d_in, 4 * hidden, stddev, rng, requires_grad),
          Tensor::randn(hidden, 4 * hidden, stddev, rng, requires_grad),
          Tensor::zeros(1, 4 * hidden, requires_grad)};
}

std::vector<Tensor> BiLstmWeights::parameters() const {
  std::vector<Tensor> p = forward.parameters();
  for (const auto& t : backward.parameters()) p.push_back(t);
  return p;
}

Tensor lstm_bidirectional(const Tensor& seq, const BiLstmWeights& weights) {
  const std::vector<Tensor> fwd = run_direction(seq, weights.forward, false);
  const std::vector<Tensor> bwd = run_direction(seq, weights.backward, true);
  std::vector<Tensor> rows;
  rows.reserve(fwd.size());
  for (size_t t = 0; t < fwd.size(); ++t) {
    const Tensor pair[] = {fwd[t], bwd[t]};
    rows.push_back(concat_cols(pair));
  }
  return concat_rows(rows);
}

}  // namespace clinprompt
