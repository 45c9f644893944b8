#include "clinprompt/optim.h"

#include <cmath>
#include <string>

#include "clinprompt/error.h"

namespace clinprompt {

void adam_step(std::span<Tensor> params, AdamState& state,
               const AdamOptions& opts) {
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(i) + " " +
                          params[i].shape().str() + " has no gradient");
    }
  }
  if (state.moments.empty()) {
    for (const auto& p : params) {
      state.moments.push_back({std::vector<double>(p.size(), 0.0),
                               std::vector<double>(p.size(), 0.0)});
    }
  }
  if (state.moments.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.moments.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].data();
    const auto grad = params[i].grad();
    auto& [m, v] = state.moments[i];
    for (size_t j = 0; j < data.size(); ++j) {
      m[j] = opts.beta1 * m[j] + (1.0 - opts.beta1) * grad[j];
      v[j] = opts.beta2 * v[j] + (1.0 - opts.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      data[j] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
  }
}

}  // namespace clinprompt
