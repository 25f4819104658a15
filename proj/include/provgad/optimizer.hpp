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

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "provgad/tensor.hpp"

namespace provgad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

// Adam with decoupled weight decay: p <- p - lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
class AdamW {
 public:
  explicit AdamW(AdamConfig config) : config_(config) {}

  void step(const std::string& name, Tensor2& param, const Tensor2& grad);
  // Call once after all parameters of an update were stepped.
  void advance() { ++t_; }
  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor2 m;
    Tensor2 v;
  };

  AdamConfig config_;
  std::size_t t_ = 1;
  std::map<std::string, Moments> moments_;
};

}  // namespace provgad
