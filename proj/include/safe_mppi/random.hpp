// Copyright 2026 The safe_mppi Authors.
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

// Counter-based random streams. Every draw is a pure function of
// (seed, domain, stream id, position), so work split across any number of
// threads reproduces the serial sequence bit for bit.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace safe_mppi {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block generate(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;
};

/// Separates independent consumers of one seed.
enum class StreamDomain : std::uint32_t {
  kMppiNoise = 1,
  kPlantNoise = 2,
  kSensorNoise = 3,
  kDisturbance = 4,
  kRectifySamples = 5,
  kTest = 0xFF,
};

/// Sequential standard-normal draws from one counter-based stream.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, StreamDomain domain, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        id_lo_(static_cast<std::uint32_t>(stream_id)),
        id_hi_(static_cast<std::uint32_t>(stream_id >> 32)),
        domain_(static_cast<std::uint32_t>(domain)) {}

  double normal() {
    if (cursor_ == 4) refill();
    return cache_[cursor_++];
  }

  /// Uniform on the open interval (0, 1); consumes one normal slot's block position.
  double uniform() {
    if (ucursor_ == 4) {
      ublock_ = Philox4x32::generate({ublock_counter_++, id_lo_, id_hi_, domain_ | 0x80000000u},
                                     key_);
      ucursor_ = 0;
    }
    return to_unit(ublock_[ucursor_++]);
  }

 private:
  static double to_unit(std::uint32_t bits) {
    return (static_cast<double>(bits) + 0.5) * 0x1p-32;
  }

  void refill() {
    const auto r = Philox4x32::generate({block_++, id_lo_, id_hi_, domain_}, key_);
    for (int pair = 0; pair < 2; ++pair) {
      const double u1 = to_unit(r[2 * pair]);
      const double u2 = to_unit(r[2 * pair + 1]);
      const double radius = std::sqrt(-2.0 * std::log(u1));
      const double angle = 2.0 * std::numbers::pi * u2;
      cache_[2 * pair] = radius * std::cos(angle);
      cache_[2 * pair + 1] = radius * std::sin(angle);
    }
    cursor_ = 0;
  }

  Philox4x32::Key key_;
  std::uint32_t id_lo_;
  std::uint32_t id_hi_;
  std::uint32_t domain_;
  std::uint32_t block_ = 0;
  std::array<double, 4> cache_{};
  int cursor_ = 4;
  std::uint32_t ublock_counter_ = 0;
  Philox4x32::Block ublock_{};
  int ucursor_ = 4;
};

}  // namespace safe_mppi
