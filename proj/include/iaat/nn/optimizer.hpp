// Copyright 2026 The IAAT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "iaat/nn/network.hpp"

namespace iaat::nn {

/// SGD hyperparameters with a step-decay learning-rate schedule.
struct OptimizerState {
  double learning_rate = 0.1;
  double weight_decay = 0.0;
  std::vector<int> decay_steps;
  double decay_factor = 0.1;
  double momentum = 0.9;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
      throw ConfigError("decay_factor must lie in (0, 1]");
    }
    if (momentum < 0.0) throw ConfigError("momentum must be nonnegative");
  }
};

/// base * factor^(number of decay steps <= epoch)
inline double learning_rate_at(const OptimizerState& opt, int epoch) {
  const auto passed = std::count_if(opt.decay_steps.begin(), opt.decay_steps.end(),
                                    [epoch](int step) { return step <= epoch; });
  return opt.learning_rate * std::pow(opt.decay_factor, static_cast<double>(passed));
}

/// Heavy-ball SGD: v <- mu v + (g + wd theta); theta <- theta - lr(epoch) v.
template <typename Scalar>
class Sgd {
 public:
  explicit Sgd(OptimizerState state) : state_(std::move(state)) { state_.validate(); }

  const OptimizerState& state() const { return state_; }
  const Vector<Scalar>& velocity() const { return velocity_; }

  void step(BasicNetwork<Scalar>& net, const Vector<Scalar>& grads, int epoch) {
    Vector<Scalar>& theta = net.parameters();
    if (grads.size() != theta.size()) {
      throw ShapeError("gradient length does not match parameter count");
    }
    if (velocity_.size() != theta.size()) velocity_ = Vector<Scalar>::Zero(theta.size());
    const Scalar lr = static_cast<Scalar>(learning_rate_at(state_, epoch));
    const Scalar wd = static_cast<Scalar>(state_.weight_decay);
    velocity_ = static_cast<Scalar>(state_.momentum) * velocity_ + grads + wd * theta;
    theta -= lr * velocity_;
  }

 private:
  OptimizerState state_;
  Vector<Scalar> velocity_;
};

template <typename Scalar>
void sgd_step(BasicNetwork<Scalar>& net, const Vector<Scalar>& grads, Sgd<Scalar>& opt,
              int epoch) {
  opt.step(net, grads, epoch);
}

}  // namespace iaat::nn
