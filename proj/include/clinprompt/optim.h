#ifndef CLINPROMPT_OPTIM_H_
#define CLINPROMPT_OPTIM_H_

#include <span>
#include <vector>

#include "clinprompt/tensor.h"

namespace clinprompt {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers for one parameter.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  std::vector<AdamMoments> moments;  // parallel to the parameter list
  long step = 0;
};

// One bias-corrected Adam update of exactly the listed tensors. Every listed
// parameter must carry a gradient.
void adam_step(std::span<Tensor> params, AdamState& state,
               const AdamOptions& opts);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions opts)
      : params_(std::move(params)), opts_(opts) {}

  void step() { adam_step(params_, state_, opts_); }
  void zero_grad() { clinprompt::zero_grad(params_); }
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions opts_;
  AdamState state_;
};

}  // namespace clinprompt

#endif  // CLINPROMPT_OPTIM_H_
