// include/spikecodec/gram.hpp
//
// Gram systems over spike waveforms: assembly from the correlation table,
// projection-bound (beta) estimation, the condition-number envelope, and
// the half-overlapped sine-chain fixture with its closed-form tridiagonal
// inverse.
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
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "spikecodec/common.hpp"
#include "spikecodec/encoder.hpp"
#include "spikecodec/kernelbank.hpp"

namespace spikecodec {

// Relative singular-value cutoff for every pseudo-inverse in this library.
inline constexpr double kSvdRelCutoff = 1e-10;
// Batch Gram assembly refuses beyond this many spikes; the windowed decoder
// is the scalable path.
inline constexpr std::int64_t kBatchSpikeCap = 20000;

struct GramSystem {
  Eigen::MatrixXd P;  // N x N, P(i,k) = <phi_i, phi_k>
  Eigen::VectorXd T;  // spike thresholds
  SpikeTrain spikes;
};

namespace detail {

inline void require_same_bank(std::uint64_t train_hash,
                              std::uint64_t table_hash) {
  if (train_hash != table_hash)
    throw CompatError("spike train and correlation table come from different banks");
}

// Minimum-norm solve via SVD with a relative cutoff; the fallback path for
// every singular or ill-conditioned system.
inline Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& A,
                                  const Eigen::VectorXd& b, int* rank_out = nullptr) {
  if (A.rows() == 0) {
    if (rank_out) *rank_out = 0;
    return Eigen::VectorXd(0);
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? kSvdRelCutoff * sv(0) : 0.0;
  Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) {
      inv_sv(i) = 1.0 / sv(i);
      ++rank;
    }
  }
  if (rank_out) *rank_out = rank;
  return svd.matrixV() * inv_sv.asDiagonal() * (svd.matrixU().transpose() * b);
}

}  // namespace detail

// Gram matrix of a spike set, every entry fetched from the table by lag.
inline Eigen::MatrixXd gram_matrix(const SpikeTrain& spikes,
                                   const CorrTable& table) {
  detail::require_same_bank(spikes.bank_hash, table.bank_hash());
  const auto n = static_cast<Eigen::Index>(spikes.size());
  Eigen::MatrixXd P(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Spike& si = spikes.spikes[static_cast<std::size_t>(i)];
    for (Eigen::Index k = i; k < n; ++k) {
      const Spike& sk = spikes.spikes[static_cast<std::size_t>(k)];
      const double v = table.rho(si.kernel_id, sk.kernel_id,
                                 sk.sample_index - si.sample_index);
      P(i, k) = v;
      P(k, i) = v;
    }
  }
  return P;
}

inline GramSystem assemble(const SpikeTrain& spikes, const CorrTable& table) {
  if (static_cast<std::int64_t>(spikes.size()) > kBatchSpikeCap)
    throw ConfigError("assemble: spike count exceeds the batch cap (" +
                      std::to_string(kBatchSpikeCap) +
                      "); use the windowed decoder");
  GramSystem sys;
  sys.P = gram_matrix(spikes, table);
  sys.T.resize(static_cast<Eigen::Index>(spikes.size()));
  for (std::size_t i = 0; i < spikes.size(); ++i)
    sys.T(static_cast<Eigen::Index>(i)) = spikes.spikes[i].threshold;
  sys.spikes = spikes;
  return sys;
}

// Per-spike norm of the projection of phi_i onto the span of its
// predecessors phi_1..phi_{i-1}, computed from the Gram matrix alone:
// value_i = sqrt(g_i' * G_{i-1}^-1 * g_i), clamped to [0, 1]. The healthy
// path grows a Cholesky factor one row at a time; singular leading blocks
// switch the remainder to pseudo-inverse solves.
inline std::vector<double> beta_past_from_gram(const Eigen::MatrixXd& P) {
  const Eigen::Index n = P.rows();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  bool factor_ok = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    double proj_sq = 0.0;
    if (i > 0) {
      if (factor_ok) {
        const Eigen::VectorXd y =
            L.topLeftCorner(i, i).triangularView<Eigen::Lower>().solve(
                P.col(i).head(i));
        proj_sq = y.squaredNorm();
        const double d2 = P(i, i) - proj_sq;
        if (d2 > 1e-12) {
          L.row(i).head(i) = y.transpose();
          L(i, i) = std::sqrt(d2);
        } else {
          factor_ok = false;  // span degenerate from here on
        }
      } else {
        const Eigen::MatrixXd G = P.topLeftCorner(i, i);
        const Eigen::VectorXd g = P.col(i).head(i);
        proj_sq = g.dot(detail::pinv_solve(G, g));
      }
    } else {
      L(0, 0) = std::sqrt(std::max(P(0, 0), 0.0));
      if (!(L(0, 0) > 0.0)) factor_ok = false;
    }
    out[static_cast<std::size_t>(i)] =
        std::sqrt(std::clamp(proj_sq, 0.0, 1.0));
  }
  return out;
}

// Per-spike norm of the projection of phi_n onto the span of all remaining
// spikes. For a well-conditioned Gram this reduces to the inverse diagonal,
// value_n = sqrt(1 - 1 / (P^-1)_nn); otherwise each index falls back to a
// pseudo-inverse solve on the deleted system.
inline std::vector<double> beta_all_from_gram(const Eigen::MatrixXd& P) {
  const Eigen::Index n = P.rows();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  if (n == 0) return out;
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) {
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double proj_sq = 1.0 - 1.0 / inv(i, i);
      out[static_cast<std::size_t>(i)] =
          std::sqrt(std::clamp(proj_sq, 0.0, 1.0));
    }
    return out;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd G(n - 1, n - 1);
    Eigen::VectorXd g(n - 1);
    for (Eigen::Index r = 0, rr = 0; r < n; ++r) {
      if (r == i) continue;
      g(rr) = P(r, i);
      for (Eigen::Index c = 0, cc = 0; c < n; ++c) {
        if (c == i) continue;
        G(rr, cc) = P(r, c);
        ++cc;
      }
      ++rr;
    }
    const double proj_sq = g.dot(detail::pinv_solve(G, g));
    out[static_cast<std::size_t>(i)] = std::sqrt(std::clamp(proj_sq, 0.0, 1.0));
  }
  return out;
}

inline std::vector<double> estimate_beta_past(const SpikeTrain& spikes,
                                              const CorrTable& table,
                                              std::size_t upto) {
  if (upto > spikes.size())
    throw ConfigError("estimate_beta_past: upto exceeds spike count");
  SpikeTrain head = spikes;
  head.spikes.resize(upto);
  const Eigen::MatrixXd P = gram_matrix(head, table);
  return beta_past_from_gram(P);
}

inline std::vector<double> estimate_beta_all(const SpikeTrain& spikes,
                                             const CorrTable& table) {
  return beta_all_from_gram(gram_matrix(spikes, table));
}

// Two-sided envelope for the condition number of a Gram of k successive
// spikes whose projection bound is beta:
//   (1 - b^2)^(-k+1) <= C_k <= (1 + (k-1) b) * ((1 - b^2) / 2)^(-k+1)
// Evaluated in log10 so large k never overflows; raw values are +inf when
// unrepresentable.
struct ConditionBounds {
  int k = 0;
  double beta = 0.0;
  double lower = 1.0;
  double upper = 1.0;
  double log10_lower = 0.0;
  double log10_upper = 0.0;
};

inline ConditionBounds condition_bounds(int k, double beta) {
  if (k < 1) throw ConfigError("condition_bounds: k must be >= 1");
  if (!(beta >= 0.0) || beta >= 1.0)
    throw DomainError("condition_bounds: beta must lie in [0, 1)");
  ConditionBounds b;
  b.k = k;
  b.beta = beta;
  const double one_minus = 1.0 - beta * beta;
  b.log10_lower = -(k - 1) * std::log10(one_minus);
  b.log10_upper =
      std::log10(1.0 + (k - 1) * beta) - (k - 1) * std::log10(one_minus / 2.0);
  b.lower = std::pow(10.0, b.log10_lower);
  b.upper = std::pow(10.0, b.log10_upper);
  return b;
}

// Bound on the projection of any unit vector of a d-spike group onto the
// span of the rest, given the per-spike bound beta:
//   beta_d^2 <= (1 + (1 - beta^2) / (d^2 beta^2))^-1
// Monotone increasing in both arguments; zero at beta = 0.
inline double beta_d_bound(double beta, int d) {
  if (d < 1) throw ConfigError("beta_d_bound: d must be >= 1");
  if (!(beta >= 0.0) || beta >= 1.0)
    throw DomainError("beta_d_bound: beta must lie in [0, 1)");
  if (beta == 0.0) return 0.0;
  const double b2 = beta * beta;
  return 1.0 / (1.0 + (1.0 - b2) / (static_cast<double>(d) * d * b2));
}

// Adversarial fixture: a chain of single-cycle sine spikes overlapped by
// half a cycle. Adjacent Gram entries are exactly -1/2 and all others
// vanish, so the Gram is tridiagonal with a closed-form inverse. Each
// spike is nearly in the span of the others for long chains, which is what
// the windowed decoder's assumptions rule out.
struct SineChain {
  KernelBank bank;
  SpikeTrain spikes;
  int period_samples = 0;

  // Inverse of the dim x dim tridiagonal matrix with unit diagonal and
  // -1/2 off-diagonals (1-based i, j):
  //   (P^-1)_{ij} = 2 * min(i,j) * (n - max(i,j)) / n,  n = dim + 1.
  static double tridiag_inverse_entry(int dim, int i, int j) {
    if (dim < 1 || i < 1 || j < 1 || i > dim || j > dim)
      throw ConfigError("tridiag_inverse_entry: index out of range");
    const double n = dim + 1;
    return 2.0 * std::min(i, j) * (n - std::max(i, j)) / n;
  }
};

inline SineChain make_sine_chain(int n_spikes, double fs, double cycles_hz) {
  if (n_spikes < 3) throw ConfigError("make_sine_chain: need at least 3 spikes");
  if (!(fs > 0.0) || !(cycles_hz > 0.0) || cycles_hz >= fs / 2.0)
    throw ConfigError("make_sine_chain: invalid rates");
  // Even sample count per cycle keeps the half-cycle shift on the grid and
  // the discrete overlap sums exact.
  auto period = static_cast<std::int64_t>(2 * std::llround(fs / (2.0 * cycles_hz)));
  if (period < 4) throw ConfigError("make_sine_chain: period too short");

  Samples wave(static_cast<std::size_t>(period));
  for (std::int64_t u = 0; u < period; ++u)
    wave[static_cast<std::size_t>(u)] =
        std::sin(2.0 * M_PI * static_cast<double>(u) / static_cast<double>(period));

  SineChain chain;
  chain.bank = build_bank(std::vector<Samples>{wave}, fs);
  chain.period_samples = static_cast<int>(period);
  chain.spikes.fs = fs;
  chain.spikes.bank_hash = chain.bank.bank_hash;
  const std::int64_t half = period / 2;
  for (int i = 0; i < n_spikes; ++i) {
    const std::int64_t t = (period - 1) + static_cast<std::int64_t>(i) * half;
    chain.spikes.spikes.push_back({0, t, 1.0});
  }
  chain.spikes.signal_len =
      chain.spikes.spikes.back().sample_index + 1;
  return chain;
}

}  // namespace spikecodec
