// Copyright 2026 the ldplan authors
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

#ifndef LDP_LATENT_HPP_
#define LDP_LATENT_HPP_

#include "ldp/common.hpp"

namespace ldp {

// A sequence of latent actions conditioned on an initial state. Each row of z
// covers L raw environment steps. diffusion_k = 0 means clean (no noise).
struct LatentSeq {
  Mat z;  // (T/L) x z_dim
  Vec s1;
  int diffusion_k = 0;
};

}  // namespace ldp

#endif  // LDP_LATENT_HPP_
