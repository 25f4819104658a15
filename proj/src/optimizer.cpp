/* Copyright 2026 The provgad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include "provgad/optimizer.hpp"

#include <cmath>

#include "provgad/error.hpp"

namespace provgad {

void AdamW::step(const std::string& name, Tensor2& param, const Tensor2& grad) {
  if (!param.same_shape(grad)) throw ShapeError("AdamW: gradient shape mismatch for " + name);
  auto [it, inserted] = moments_.try_emplace(name);
  if (inserted) {
    it->second.m = Tensor2(param.rows(), param.cols());
    it->second.v = Tensor2(param.rows(), param.cols());
  }
  Tensor2& m = it->second.m;
  Tensor2& v = it->second.v;
  const double t = static_cast<double>(t_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
    v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] -= config_.lr * (config_.weight_decay * param[i] + m_hat / (std::sqrt(v_hat) + config_.eps));
  }
}

}  // namespace provgad
