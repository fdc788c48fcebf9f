// include/spikecodec/encoder.hpp
//
// Convolve-then-threshold encoder. Each kernel convolves the input, runs a
// time-varying threshold with an after-hyperpolarization (ahp) term, and
// fires at threshold crossings; the merged, sorted events are the code.
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
#include <cstdint>
#include <span>
#include <vector>

#include "spikecodec/common.hpp"
#include "spikecodec/detail/fft.hpp"
#include "spikecodec/kernelbank.hpp"

namespace spikecodec {

// The ahp triple: threshold sits at `baseline` (C) until the kernel fires,
// each spike adds `ahp_jump` (M) which decays linearly to zero over
// `refractory` (delta) seconds.
struct ThresholdParams {
  double baseline = 0.0;   // C
  double ahp_jump = 0.0;   // M
  double refractory = 0.0; // delta, seconds

  double delta_samples(double fs) const { return refractory * fs; }

  // With M > 2 * b * sqrt(tau_max) the per-kernel interspike interval is
  // guaranteed to exceed delta/2 for inputs bounded by b.
  bool stable_for(double amplitude_bound, double max_support_seconds) const {
    return ahp_jump > 2.0 * amplitude_bound * std::sqrt(max_support_seconds);
  }

  void validate() const {
    if (!(baseline > 0.0) || !(ahp_jump > 0.0) || !(refractory > 0.0))
      throw ConfigError("ThresholdParams: C, M and delta must all be positive");
  }
};

struct Spike {
  int kernel_id = 0;
  std::int64_t sample_index = 0;
  double threshold = 0.0;
};

inline bool spike_order(const Spike& a, const Spike& b) {
  if (a.sample_index != b.sample_index) return a.sample_index < b.sample_index;
  return a.kernel_id < b.kernel_id;
}

struct SpikeTrain {
  std::vector<Spike> spikes;  // sorted by (sample_index, kernel_id)
  double fs = 0.0;
  std::int64_t signal_len = 0;
  std::uint64_t bank_hash = 0;

  std::size_t size() const { return spikes.size(); }
  double duration_seconds() const {
    return static_cast<double>(signal_len) / fs;
  }
};

// Discrete convolution C^j[t] = sum_u X[u] * phi_j[t - u] / fs over
// t in [0, signal_len + support_len - 1). Empty signal yields empty output.
inline Samples convolve(std::span<const double> signal, const Kernel& kernel) {
  if (signal.empty()) return {};
  Samples out = detail::fft_convolve(signal, kernel.samples);
  const double inv_fs = 1.0 / kernel.fs;
  for (double& v : out) v *= inv_fs;
  return out;
}

// Reference path for the same quantity; used to cross-check the FFT route.
inline Samples convolve_direct(std::span<const double> signal,
                               const Kernel& kernel) {
  if (signal.empty()) return {};
  Samples out = detail::direct_convolve(signal, kernel.samples);
  const double inv_fs = 1.0 / kernel.fs;
  for (double& v : out) v *= inv_fs;
  return out;
}

// Threshold of one kernel at sample t given that kernel's past spike times
// (ascending): baseline plus the linearly-decaying ahp term of every spike
// in the trailing refractory window [t - delta, t].
//
// This is the single replay function: the encoder records its values, and
// a decoder reading only spike times reproduces them bit-identically by
// calling it with the same history.
inline double threshold_at(std::span<const std::int64_t> history,
                           std::int64_t t, const ThresholdParams& params,
                           double fs) {
  const double delta = params.delta_samples(fs);
  double thr = params.baseline;
  for (std::size_t i = history.size(); i-- > 0;) {
    const auto age = static_cast<double>(t - history[i]);
    if (age < 0.0) continue;
    if (age > delta) break;
    thr += params.ahp_jump * (1.0 - age / delta);
  }
  return thr;
}

// Encode a signal against the bank. Per kernel, scan the convolution in
// time order and fire at the first sample where it meets the threshold;
// the fired spike immediately raises that kernel's threshold for
// subsequent samples. Input is expected peak-normalized to [-1, 1] (the
// CLI takes care of that); NaNs are rejected.
//
// With store_measured, the recorded threshold is the measured convolution
// value at the crossing instead of the model value; such trains are not
// replayable from times alone and must be stored with thresholds.
inline SpikeTrain encode(std::span<const double> signal, const KernelBank& bank,
                         const ThresholdParams& params,
                         bool store_measured = false) {
  params.validate();
  for (double v : signal)
    if (std::isnan(v)) throw InputError("encode: NaN in input signal");

  SpikeTrain train;
  train.fs = bank.fs;
  train.signal_len = static_cast<std::int64_t>(signal.size());
  train.bank_hash = bank.bank_hash;

  std::vector<std::int64_t> history;
  for (const Kernel& kernel : bank.kernels) {
    const Samples conv = convolve(signal, kernel);
    history.clear();
    for (std::int64_t t = 0; t < static_cast<std::int64_t>(conv.size()); ++t) {
      const double thr =
          threshold_at(history, t, params, bank.fs);
      if (conv[static_cast<std::size_t>(t)] >= thr) {
        train.spikes.push_back(
            {kernel.id, t,
             store_measured ? conv[static_cast<std::size_t>(t)] : thr});
        history.push_back(t);
      }
    }
  }
  std::sort(train.spikes.begin(), train.spikes.end(), spike_order);
  return train;
}

// Largest absolute amplitude; the encoder's normalization contract is the
// caller's responsibility, this is the check the CLI uses before warning.
inline double input_peak(std::span<const double> signal) {
  double peak = 0.0;
  for (double v : signal) peak = std::max(peak, std::abs(v));
  return peak;
}

}  // namespace spikecodec
