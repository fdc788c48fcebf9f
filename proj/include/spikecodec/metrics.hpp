// include/spikecodec/metrics.hpp
//
// Evaluation and diagnostics: SNR, spike-rate statistics, the approximate
// reconstruction error bound, and the overlap partition used by the
// windowing convergence checks.
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

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spikecodec/common.hpp"
#include "spikecodec/encoder.hpp"
#include "spikecodec/kernelbank.hpp"

namespace spikecodec {

// 10 * log10(||X||^2 / ||X - X*||^2); +inf when the estimate is exact.
inline double snr_db(std::span<const double> reference,
                     std::span<const double> estimate) {
  if (reference.size() != estimate.size())
    throw InputError("snr_db: length mismatch");
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    sig += reference[i] * reference[i];
    const double e = reference[i] - estimate[i];
    err += e * e;
  }
  if (!(sig > 0.0)) throw InputError("snr_db: reference signal is all zero");
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

// Diagnostic relative-error bound for near-miss encodings: kernel mismatch
// delta (L2), spike-time jitter gamma with kernel Lipschitz constant,
// component overlap x_max and frame slack eta:
//   ||X - X*||^2 / ||X||^2 <= (delta + L*gamma)^2 * (x_max + 1) / (1 - eta)
// The inputs are user-supplied; nothing in the pipeline estimates them.
inline double approx_error_bound(double delta, double gamma, double lipschitz,
                                 double x_max, double eta) {
  if (delta < 0.0 || gamma < 0.0 || lipschitz < 0.0 || x_max < 0.0 || eta < 0.0)
    throw DomainError("approx_error_bound: inputs must be non-negative");
  if (eta >= 1.0)
    throw DomainError("approx_error_bound: eta must be < 1 (frame condition)");
  const double miss = delta + lipschitz * gamma;
  return miss * miss * (x_max + 1.0) / (1.0 - eta);
}

// Chain partition of a spike train, built backwards from the last spike:
// the first group seeds with the final spike, and each next group collects
// the not-yet-assigned spikes whose supports overlap the previous group.
// Groups therefore overlap adjacent groups only; a spike disjoint from
// everything later starts a fresh group.
struct Partition {
  // Index ranges [first, last] into the sorted spike vector, descending in
  // time (groups[0] holds the latest spikes).
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  int d_max = 0;
};

inline Partition partition_overlap(const SpikeTrain& spikes,
                                   const KernelBank& bank) {
  Partition part;
  if (spikes.spikes.empty()) return part;
  auto support_start = [&](const Spike& s) {
    return s.sample_index - bank.at(s.kernel_id).support_len() + 1;
  };
  std::size_t hi = spikes.size();  // spikes below hi are unassigned
  // How far back in time the previous group's supports reach; an earlier
  // spike overlaps that group exactly when its time is >= this extent.
  std::int64_t extent = 0;
  bool fresh = true;
  while (hi > 0) {
    std::size_t lo = hi;
    if (!fresh)
      while (lo > 0 && spikes.spikes[lo - 1].sample_index >= extent) --lo;
    if (lo == hi) {
      // Nothing overlaps the previous group: the latest unassigned spike
      // seeds a new chain on its own (this also starts the whole walk).
      lo = hi - 1;
    }
    std::int64_t group_extent = support_start(spikes.spikes[lo]);
    for (std::size_t i = lo + 1; i < hi; ++i)
      group_extent = std::min(group_extent, support_start(spikes.spikes[i]));
    part.groups.emplace_back(lo, hi - 1);
    part.d_max = std::max(part.d_max, static_cast<int>(hi - lo));
    extent = group_extent;
    fresh = false;
    hi = lo;
  }
  return part;
}

// Group-size bound implied by the spike-rate bound: ceil(tau * 2m / delta).
inline int partition_group_bound(const KernelBank& bank,
                                 const ThresholdParams& params) {
  return static_cast<int>(std::ceil(bank.max_support_seconds() * 2.0 *
                                    bank.size() / params.refractory));
}

struct EvalReport {
  bool snr_defined = false;
  double snr_db = 0.0;           // +inf serialized as "inf"
  bool high_fidelity = false;    // snr >= 80 dB
  std::int64_t spike_count = 0;
  double spikes_per_second = 0.0;
  double nyquist_fraction = 0.0; // spikes_per_second / fs (fs itself is the
                                 // reporting "Nyquist rate" here, not 2*BW)
  double baseline = 0.0;
  double ahp_jump = 0.0;
  double refractory = 0.0;
  double encode_ms = 0.0;
  double decode_ms = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["snr_db"] = snr_defined
                      ? (std::isinf(snr_db) ? nlohmann::json("inf")
                                            : nlohmann::json(snr_db))
                      : nlohmann::json(nullptr);
    j["high_fidelity"] = high_fidelity;
    j["spike_count"] = spike_count;
    j["spikes_per_second"] = spikes_per_second;
    j["nyquist_fraction"] = nyquist_fraction;
    j["params"] = {{"C", baseline}, {"M", ahp_jump}, {"delta", refractory}};
    j["runtime_ms"] = {{"encode", encode_ms}, {"decode", decode_ms}};
    return j;
  }
};

inline EvalReport evaluate(std::span<const double> signal,
                           const SpikeTrain& spikes,
                           std::span<const double> reconstruction,
                           const ThresholdParams& params,
                           double encode_ms = 0.0, double decode_ms = 0.0) {
  if (signal.size() != reconstruction.size())
    throw InputError("evaluate: signal and reconstruction lengths differ");
  EvalReport r;
  r.spike_count = static_cast<std::int64_t>(spikes.size());
  const double duration = spikes.duration_seconds();
  r.spikes_per_second = duration > 0.0 ? r.spike_count / duration : 0.0;
  r.nyquist_fraction = spikes.fs > 0.0 ? r.spikes_per_second / spikes.fs : 0.0;
  r.baseline = params.baseline;
  r.ahp_jump = params.ahp_jump;
  r.refractory = params.refractory;
  r.encode_ms = encode_ms;
  r.decode_ms = decode_ms;
  bool ref_nonzero = false;
  for (double v : signal)
    if (v != 0.0) {
      ref_nonzero = true;
      break;
    }
  if (ref_nonzero) {
    r.snr_defined = true;
    r.snr_db = snr_db(signal, reconstruction);
    r.high_fidelity = r.snr_db >= 80.0;
  }
  return r;
}

}  // namespace spikecodec
