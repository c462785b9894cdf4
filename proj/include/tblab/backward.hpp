#pragma once

#include <vector>

#include "tblab/forward.hpp"

namespace tblab {

// Reverse-mode gradient of -log p(target | input) at the final position,
// with respect to every parameter tensor. The trace must have been produced
// by forward_with_trace on the same parameters.
Gradients backward(const Parameters& params, const ForwardTrace& trace, int target_token);

// Lower-level entry: accumulate into `acc` the gradient of any loss whose
// derivative w.r.t. the final-position logits is `d_logits`. Runs its own
// forward internally. Editors build weighted sums of these.
void accumulate_logit_gradient(const Parameters& params, const ModelInput& input,
                               const std::vector<double>& d_logits, Gradients& acc);

// Fused train/edit steps: one forward, one reverse, gradient scaled by
// `scale` added into `acc`. Both return the loss value they differentiate.

// -log p(target) at the final position.
double nll_gradient(const Parameters& params, const ModelInput& input, int target_token,
                    double scale, Gradients& acc);

// KL(p_ref || p_model) over the final-position answer distribution; p_ref is
// a fixed reference distribution (typically the pre-edit model's).
double kl_gradient(const Parameters& params, const ModelInput& input,
                   const std::vector<double>& p_ref, double scale, Gradients& acc);

}  // namespace tblab
