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

#include "lanesentinel/common/error.hpp"

namespace lanesentinel {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kTooFewSamples: return "TooFewSamples";
    case Errc::kDegenerateSystem: return "DegenerateSystem";
    case Errc::kEmptyExtent: return "EmptyExtent";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kExtentTooShort: return "ExtentTooShort";
    case Errc::kIoError: return "IoError";
    case Errc::kStaleCache: return "StaleCache";
    case Errc::kEmptyClass: return "EmptyClass";
    case Errc::kNonFiniteGradient: return "NonFiniteGradient";
    case Errc::kPatchOutOfFrame: return "PatchOutOfFrame";
    case Errc::kEmptyInput: return "EmptyInput";
    case Errc::kLabelMismatch: return "LabelMismatch";
    case Errc::kConfigError: return "ConfigError";
    case Errc::kIncompatibleModelFile: return "IncompatibleModelFile";
    case Errc::kNoResults: return "NoResults";
    case Errc::kHashMismatch: return "HashMismatch";
  }
  return "Unknown";
}

}  // namespace lanesentinel
