#include "hfm/optim.hpp"

#include <cmath>

namespace hfm {
inline namespace HFM_ABI_NAMESPACE {

void TrainSchedule::validate() const {
  require(initial_lr > 0 && std::isfinite(initial_lr), "schedule: initial learning rate must be positive");
  require(decay_factor > 0 && decay_factor <= 1, "schedule: decay factor must be in (0, 1]");
  for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
    require(decay_epochs[i] >= 0, "schedule: decay epochs must be non-negative");
    require(i == 0 || decay_epochs[i] > decay_epochs[i - 1], "schedule: decay epochs must be strictly increasing");
  }
  require(epochs > 0, "schedule: epochs must be positive");
  require(warmup_epochs >= 0 && warmup_epochs < epochs, "schedule: warm-up must be shorter than training");
  require(batch_size > 0, "schedule: batch size must be positive");
}

double lr_at_epoch(const TrainSchedule& schedule, int epoch) {
  require(epoch >= 0, "lr_at_epoch: negative epoch");
  double lr = schedule.initial_lr;
  for (int e : schedule.decay_epochs)
    if (e <= epoch) lr *= schedule.decay_factor;
  return lr;
}

ScaleKinds loss_for_epoch(int epoch, const TrainSchedule& schedule) {
  require(epoch >= 0, "loss_for_epoch: negative epoch");
  return epoch < schedule.warmup_epochs ? kAllL2Kinds : kHybridKinds;
}

RMSprop::RMSprop(double alpha, double eps) : alpha_(alpha), eps_(eps) {
  require(alpha >= 0 && alpha < 1, "rmsprop: alpha must be in [0, 1)");
  require(eps > 0, "rmsprop: eps must be positive");
}

void RMSprop::step(Parameters& params) {
  bool any = false;
  for (const auto& e : params.entries()) any = any || e.tensor.has_grad();
  require(any, "rmsprop: step called before backward (no gradients)");
  require(std::isfinite(lr) && lr >= 0, "rmsprop: learning rate must be finite and non-negative");

  for (auto& e : params.entries()) {
    Tensor& p = e.tensor;
    if (!p.has_grad()) continue;
    auto& v = v_[e.name];
    if (v.empty()) v.assign(p.numel(), Scalar(0));
    require(v.size() == p.numel(), "rmsprop: state size mismatch for " + e.name);
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double vi = alpha_ * v[i] + (1.0 - alpha_) * gi * gi;
      v[i] = static_cast<Scalar>(vi);
      w[i] = static_cast<Scalar>(w[i] - lr * gi / (std::sqrt(vi) + eps_));
    }
    p.clear_grad();
  }
  ++steps_;
}

void RMSprop::restore(std::map<std::string, std::vector<Scalar>> state, std::uint64_t steps) {
  for (const auto& [name, v] : state)
    for (Scalar x : v) require(x >= 0 && std::isfinite(static_cast<double>(x)), "rmsprop: invalid state for " + name);
  v_ = std::move(state);
  steps_ = steps;
}

}  // namespace HFM_ABI_NAMESPACE
}  // namespace hfm
