#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hfm/loss.hpp"

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

struct TrainSchedule {
  double initial_lr = 1e-3;
  std::vector<int> decay_epochs{2, 4, 6, 9, 12};
  double decay_factor = 0.5;
  int epochs = 15;
  int warmup_epochs = 4;  // all-L2 epochs before switching to the hybrid loss
  int batch_size = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// initial_lr * decay_factor^(number of decay epochs <= epoch)
double lr_at_epoch(const TrainSchedule& schedule, int epoch);

// All-L2 during warm-up, hybrid afterwards. Weights are the same either way.
ScaleKinds loss_for_epoch(int epoch, const TrainSchedule& schedule);

// v <- alpha v + (1 - alpha) g^2;  p <- p - lr g / (sqrt(v) + eps)
class RMSprop {
 public:
  explicit RMSprop(double alpha = 0.9, double eps = 1e-8);

  double alpha() const { return alpha_; }
  double eps() const { return eps_; }
  double lr = 1e-3;

  // Applies one update from the accumulated gradients, then clears them.
  // Parameters without a gradient are left alone; if no parameter has one
  // the call is a contract violation.
  void step(Parameters& params);

  std::uint64_t steps() const { return steps_; }
  // Running averages of squared gradients keyed by parameter name.
  const std::map<std::string, std::vector<Scalar>>& state() const { return v_; }
  void restore(std::map<std::string, std::vector<Scalar>> state, std::uint64_t steps);

 private:
  double alpha_, eps_;
  std::uint64_t steps_ = 0;
  std::map<std::string, std::vector<Scalar>> v_;
};

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
