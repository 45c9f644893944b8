#ifndef CLINPROMPT_LSTM_H_
#define CLINPROMPT_LSTM_H_

#include <vector>

#include "clinprompt/tensor.h"

namespace clinprompt {

class Rng;

// Single-direction LSTM cell parameters. Gate blocks along the 4h axis are
// ordered input, forget, cell, output.
struct LstmWeights {
  Tensor w_input;   // [d_in x 4h]
  Tensor w_hidden;  // [h x 4h]
  Tensor bias;      // [1 x 4h]

  size_t hidden_size() const { return w_hidden.rows(); }
  static LstmWeights zeros(size_t d_in, size_t hidden, bool requires_grad);
  static LstmWeights random(size_t d_in, size_t hidden, double stddev,
                            Rng& rng, bool requires_grad);
  std::vector<Tensor> parameters() const { return {w_input, w_hidden, bias}; }
};

struct BiLstmWeights {
  LstmWeights forward;
  LstmWeights backward;

  std::vector<Tensor> parameters() const;
};

// Runs the recurrence over rows of `seq` ([L x d_in]) in both directions from
// zero state; row t of the result is [h_fwd(t), h_bwd(t)], shape [L x 2h].
Tensor lstm_bidirectional(const Tensor& seq, const BiLstmWeights& weights);

}  // namespace clinprompt

#endif  // CLINPROMPT_LSTM_H_
