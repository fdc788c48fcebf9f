// include/spikecodec/decode_window.hpp
//
// Streaming windowed decoder. Each incoming spike is orthogonalized against
// the last w spikes only, and the reconstruction is updated by the
// projection of the signal onto that orthogonal complement - O(w^3) per
// spike, never touching a full Gram. The inner product with the complement
// is computed from thresholds alone, so the decoder works from the spike
// file without ever seeing the signal.
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

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <vector>

#include "spikecodec/common.hpp"
#include "spikecodec/decode_batch.hpp"
#include "spikecodec/encoder.hpp"
#include "spikecodec/gram.hpp"
#include "spikecodec/kernelbank.hpp"

namespace spikecodec {

// Below this squared-norm the complement direction is treated as degenerate:
// dividing by it would amplify noise past double precision, so the spike is
// counted and skipped instead of updating the output.
inline constexpr double kDegenerateNormSq = 1e-8;

struct OrthoComplement {
  Eigen::VectorXd coeffs;  // c with G_w c = g, one entry per window spike
  double norm_sq = 1.0;    // ||phi_perp||^2 = 1 - g.c, clamped at 0
  bool degenerate = false;
  double condition_estimate = 1.0;  // of the window Gram
};

// Orthogonal complement of a new spike against a window of earlier spikes:
// solves the window Gram system for the projection coefficients. A
// numerically singular window Gram falls back to the pseudo-inverse.
inline OrthoComplement ortho_complement(const Spike& incoming,
                                        std::span<const Spike> window,
                                        const CorrTable& table) {
  OrthoComplement oc;
  const auto n = static_cast<Eigen::Index>(window.size());
  if (n == 0) {
    oc.coeffs = Eigen::VectorXd(0);
    oc.norm_sq = table.rho(incoming.kernel_id, incoming.kernel_id, 0);
    return oc;
  }
  Eigen::MatrixXd G(n, n);
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Spike& si = window[static_cast<std::size_t>(i)];
    g(i) = table.rho(si.kernel_id, incoming.kernel_id,
                     incoming.sample_index - si.sample_index);
    for (Eigen::Index k = i; k < n; ++k) {
      const Spike& sk = window[static_cast<std::size_t>(k)];
      const double v = table.rho(si.kernel_id, sk.kernel_id,
                                 sk.sample_index - si.sample_index);
      G(i, k) = v;
      G(k, i) = v;
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(G);
  if (llt.info() == Eigen::Success && llt.rcond() > 1.0 / kCholeskyConditionLimit) {
    oc.coeffs = llt.solve(g);
    oc.condition_estimate = 1.0 / llt.rcond();
  } else {
    oc.coeffs = detail::pinv_solve(G, g);
    oc.condition_estimate = std::numeric_limits<double>::infinity();
  }
  const double self = table.rho(incoming.kernel_id, incoming.kernel_id, 0);
  oc.norm_sq = std::max(0.0, self - g.dot(oc.coeffs));
  oc.degenerate = oc.norm_sq < kDegenerateNormSq;
  return oc;
}

struct WindowState {
  const KernelBank* bank = nullptr;
  const CorrTable* table = nullptr;
  int w = 0;
  std::deque<Spike> window;  // last <= w spikes, oldest first
  Samples out;
  std::int64_t skipped = 0;
  double max_condition_seen = 1.0;
};

inline WindowState make_window_state(const KernelBank& bank,
                                     const CorrTable& table, int w,
                                     std::int64_t out_len) {
  if (w < 1) throw ConfigError("window size must be >= 1");
  WindowState st;
  st.bank = &bank;
  st.table = &table;
  st.w = w;
  st.out.assign(static_cast<std::size_t>(std::max<std::int64_t>(out_len, 0)), 0.0);
  return st;
}

namespace detail {

inline void scatter_kernel(Samples& out, const Kernel& kernel,
                           std::int64_t spike_time, double scale) {
  if (scale == 0.0) return;
  const int len = kernel.support_len();
  const auto out_len = static_cast<std::int64_t>(out.size());
  for (int u = 0; u < len; ++u) {
    const std::int64_t t = spike_time - u;
    if (t < 0) break;
    if (t >= out_len) continue;
    out[static_cast<std::size_t>(t)] +=
        scale * kernel.samples[static_cast<std::size_t>(u)];
  }
}

}  // namespace detail

// One streaming step. The update is
//   out += (<X, phi_perp> / ||phi_perp||^2) * (phi_new - sum_i c_i phi_i)
// with <X, phi_perp> = T_new - sum_i c_i T_i, exact because every window
// spike satisfies <X, phi_i> = T_i. Degenerate complements leave the output
// untouched; the spike still enters the window (it is one of the "last w").
inline void push_spike(WindowState& state, const Spike& spike) {
  if (!state.window.empty() &&
      spike.sample_index < state.window.back().sample_index)
    throw SequencingError("push_spike: spike is earlier than the window head");

  const std::vector<Spike> window_copy(state.window.begin(), state.window.end());
  const OrthoComplement oc =
      ortho_complement(spike, window_copy, *state.table);
  if (std::isfinite(oc.condition_estimate))
    state.max_condition_seen =
        std::max(state.max_condition_seen, oc.condition_estimate);

  if (oc.degenerate) {
    ++state.skipped;
  } else {
    double inner = spike.threshold;
    for (std::size_t i = 0; i < window_copy.size(); ++i)
      inner -= oc.coeffs(static_cast<Eigen::Index>(i)) *
               window_copy[i].threshold;
    const double scale = inner / oc.norm_sq;
    detail::scatter_kernel(state.out, state.bank->at(spike.kernel_id),
                           spike.sample_index, scale);
    for (std::size_t i = 0; i < window_copy.size(); ++i)
      detail::scatter_kernel(
          state.out, state.bank->at(window_copy[i].kernel_id),
          window_copy[i].sample_index,
          -scale * oc.coeffs(static_cast<Eigen::Index>(i)));
  }

  if (static_cast<int>(state.window.size()) == state.w)
    state.window.pop_front();
  state.window.push_back(spike);
}

struct StreamStats {
  std::int64_t skipped = 0;
  double max_condition_seen = 1.0;
};

struct StreamResult {
  Samples samples;
  StreamStats stats;
};

// Fold the whole train through the windowed update.
inline StreamResult stream_decode(const SpikeTrain& spikes,
                                  const KernelBank& bank,
                                  const CorrTable& table, int w,
                                  std::int64_t out_len = -1) {
  detail::require_same_bank(spikes.bank_hash, table.bank_hash());
  if (out_len < 0) out_len = spikes.signal_len;
  WindowState state = make_window_state(bank, table, w, out_len);
  for (const Spike& s : spikes.spikes) push_spike(state, s);
  StreamResult result;
  result.samples = std::move(state.out);
  result.stats.skipped = state.skipped;
  result.stats.max_condition_seen = state.max_condition_seen;
  return result;
}

}  // namespace spikecodec
