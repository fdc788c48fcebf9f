// include/spikecodec/decode_batch.hpp
//
// Offline minimum-norm decoder: solve P * alpha = T and synthesize the
// reconstruction as the coefficient-weighted sum of time-reversed kernels
// placed at the spike times.
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
#include <string>

#include "spikecodec/common.hpp"
#include "spikecodec/encoder.hpp"
#include "spikecodec/gram.hpp"
#include "spikecodec/kernelbank.hpp"

namespace spikecodec {

// Condition estimate beyond which the Cholesky path is abandoned for the
// SVD pseudo-inverse (which yields the minimum-norm coefficients).
inline constexpr double kCholeskyConditionLimit = 1e12;

struct SolverReport {
  enum class Method { cholesky, svd } method = Method::cholesky;
  int rank = 0;
  double condition_estimate = 0.0;

  const char* method_name() const {
    return method == Method::cholesky ? "cholesky" : "svd";
  }
};

struct Reconstruction {
  Samples samples;        // length out_len
  Eigen::VectorXd alpha;  // one coefficient per spike
  SolverReport report;
};

// Solve the Gram system for the reconstruction coefficients. Cholesky
// first; on factorization failure or an estimated condition number beyond
// kCholeskyConditionLimit, fall back to the SVD pseudo-inverse.
inline Eigen::VectorXd solve_coefficients(const GramSystem& sys,
                                          SolverReport* report = nullptr) {
  const Eigen::Index n = sys.P.rows();
  SolverReport rep;
  if (n == 0) {
    if (report) *report = rep;
    return Eigen::VectorXd(0);
  }
  if (!sys.T.allFinite())
    throw InputError("solve_coefficients: non-finite threshold vector");

  Eigen::LLT<Eigen::MatrixXd> llt(sys.P);
  if (llt.info() == Eigen::Success) {
    const double rcond = llt.rcond();
    const double cond = rcond > 0.0 ? 1.0 / rcond
                                    : std::numeric_limits<double>::infinity();
    if (cond <= kCholeskyConditionLimit) {
      rep.method = SolverReport::Method::cholesky;
      rep.rank = static_cast<int>(n);
      rep.condition_estimate = cond;
      if (report) *report = rep;
      return llt.solve(sys.T);
    }
    rep.condition_estimate = cond;
  } else {
    rep.condition_estimate = std::numeric_limits<double>::infinity();
  }
  rep.method = SolverReport::Method::svd;
  Eigen::VectorXd alpha = detail::pinv_solve(sys.P, sys.T, &rep.rank);
  if (report) *report = rep;
  return alpha;
}

// Scatter-add each time-reversed kernel at its spike time, scaled by its
// coefficient; samples outside [0, out_len) are discarded.
inline Samples reconstruct(const SpikeTrain& spikes,
                           const Eigen::VectorXd& alpha,
                           const KernelBank& bank, std::int64_t out_len) {
  if (static_cast<std::size_t>(alpha.size()) != spikes.size())
    throw InputError("reconstruct: coefficient count does not match spikes");
  Samples out(static_cast<std::size_t>(std::max<std::int64_t>(out_len, 0)), 0.0);
  for (std::size_t i = 0; i < spikes.size(); ++i) {
    const Spike& s = spikes.spikes[i];
    const Kernel& kernel = bank.at(s.kernel_id);
    const double a = alpha(static_cast<Eigen::Index>(i));
    if (a == 0.0) continue;
    const int len = kernel.support_len();
    for (int u = 0; u < len; ++u) {
      const std::int64_t t = s.sample_index - u;
      if (t < 0) break;  // kernel extends backward in time from the spike
      if (t >= out_len) continue;
      out[static_cast<std::size_t>(t)] +=
          a * kernel.samples[static_cast<std::size_t>(u)];
    }
  }
  return out;
}

// assemble -> solve -> reconstruct. out_len < 0 means the encoded signal
// length.
inline Reconstruction decode(const SpikeTrain& spikes, const KernelBank& bank,
                             const CorrTable& table, std::int64_t out_len = -1) {
  if (out_len < 0) out_len = spikes.signal_len;
  const GramSystem sys = assemble(spikes, table);
  Reconstruction rec;
  rec.alpha = solve_coefficients(sys, &rec.report);
  rec.samples = reconstruct(spikes, rec.alpha, bank, out_len);
  return rec;
}

}  // namespace spikecodec
