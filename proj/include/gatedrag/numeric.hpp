// Copyright 2026 The gatedrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>

namespace gatedrag {

/// Pairwise (cascade) summation; error grows O(log n) instead of O(n).
double pairwise_sum(std::span<const double> values) noexcept;

double pairwise_mean(std::span<const double> values) noexcept;

/// SplitMix64 step. Used to derive independent per-trial / per-query seeds
/// from one master seed.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw. Kept out
/// of <random> distributions so results match across standard libraries.
inline double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace gatedrag
