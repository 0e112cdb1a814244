/* Copyright 2026 The LaneSentinel Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "lanesentinel/kernels/kernels.hpp"

namespace lanesentinel::kernels {

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",
      &reference::conv3x3_same<float>,
      &reference::conv3x3_weight_grad<float>,
      &reference::relu<float>,
      &reference::relu_backward<float>,
      &reference::sign_step_box<float>,
      &reference::dot<float>,
  };
  return table;
}

}  // namespace lanesentinel::kernels
