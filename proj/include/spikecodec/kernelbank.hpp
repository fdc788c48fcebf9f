// include/spikecodec/kernelbank.hpp
//
// The kernel ensemble: gammatone synthesis, bank construction and hashing,
// and the pairwise cross-correlation tables that back all Gram lookups.
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
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "spikecodec/common.hpp"
#include "spikecodec/detail/fft.hpp"

namespace spikecodec {

// All inner products use the discrete metric <f,g> = sum f[u]*g[u] / fs, so
// values approximate continuous-time integrals and a unit-norm kernel has
// sum(samples^2)/fs == 1.

struct Kernel {
  int id = -1;
  Samples samples;
  double fs = 0.0;

  int support_len() const { return static_cast<int>(samples.size()); }
  double support_seconds() const {
    return static_cast<double>(samples.size()) / fs;
  }
};

struct GammatoneParams {
  double f_center = 0.0;  // Hz
  int order = 4;
  double bandwidth = 0.0;  // Hz; <= 0 means auto (1.019 * ERB(f))
  double phase = 0.0;      // radians

  bool operator==(const GammatoneParams&) const = default;
};

// Equivalent rectangular bandwidth (Glasberg & Moore).
inline double erb_hz(double f_hz) {
  return 24.7 * (4.37 * f_hz / 1000.0 + 1.0);
}

inline double default_gammatone_bandwidth(double f_hz) {
  return 1.019 * erb_hz(f_hz);
}

// m center frequencies equally spaced on the ERB-number scale over
// [f_lo, f_hi], ascending.
inline std::vector<double> erb_spaced_frequencies(int m, double f_lo,
                                                  double f_hi) {
  if (m < 1 || f_lo <= 0.0 || f_hi <= f_lo)
    throw ConfigError("erb_spaced_frequencies: invalid range");
  auto erb_number = [](double f) {
    return 21.4 * std::log10(4.37 * f / 1000.0 + 1.0);
  };
  auto erb_number_inv = [](double e) {
    return (std::pow(10.0, e / 21.4) - 1.0) * 1000.0 / 4.37;
  };
  const double e_lo = erb_number(f_lo), e_hi = erb_number(f_hi);
  std::vector<double> out(m);
  for (int i = 0; i < m; ++i) {
    const double e =
        (m == 1) ? 0.5 * (e_lo + e_hi)
                 : e_lo + (e_hi - e_lo) * static_cast<double>(i) / (m - 1);
    out[i] = erb_number_inv(e);
  }
  return out;
}

namespace detail {

// Normalize in place under the 1/fs metric; throws on a zero waveform.
inline void normalize_kernel(Samples& s, double fs, const char* what) {
  double energy = 0.0;
  for (double v : s) {
    if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": non-finite sample");
    energy += v * v;
  }
  energy /= fs;
  if (!(energy > 0.0)) throw ConfigError(std::string(what) + ": zero-energy waveform");
  const double scale = 1.0 / std::sqrt(energy);
  for (double& v : s) v *= scale;
}

// Envelope t^(n-1) * exp(-2*pi*b*t); peaks at t = (n-1) / (2*pi*b).
inline double gammatone_envelope(double t, int n, double b) {
  if (t < 0.0) return 0.0;
  if (n == 1) return std::exp(-2.0 * M_PI * b * t);
  return std::pow(t, n - 1) * std::exp(-2.0 * M_PI * b * t);
}

}  // namespace detail

// Gammatone waveform a * t^(n-1) * exp(-2*pi*b*t) * cos(2*pi*f*t + phase),
// sampled on the fs grid, truncated where the envelope falls below
// trunc_rel of its peak, then unit-normalized (the amplitude constant is
// absorbed by normalization).
inline Kernel make_gammatone(const GammatoneParams& p, double fs,
                             double trunc_rel = 1e-4) {
  if (!(fs > 0.0)) throw ConfigError("make_gammatone: fs must be positive");
  if (!(p.f_center > 0.0) || p.f_center >= fs / 2.0)
    throw ConfigError("make_gammatone: center frequency must lie below fs/2");
  if (p.order < 1) throw ConfigError("make_gammatone: order must be >= 1");
  if (p.bandwidth < 0.0)
    throw ConfigError("make_gammatone: bandwidth must be positive (0 = auto)");
  const double b =
      p.bandwidth > 0.0 ? p.bandwidth : default_gammatone_bandwidth(p.f_center);
  if (!(trunc_rel > 0.0 && trunc_rel < 1.0))
    throw ConfigError("make_gammatone: trunc_rel must be in (0, 1)");

  const double t_peak = (p.order - 1) / (2.0 * M_PI * b);
  const double peak = detail::gammatone_envelope(std::max(t_peak, 0.0), p.order, b);
  const double cutoff = trunc_rel * peak;

  // Bracket the decaying side of the envelope, then bisect to the cutoff.
  double t_lo = t_peak;
  double t_hi = t_peak + 1.0 / (2.0 * M_PI * b);
  while (detail::gammatone_envelope(t_hi, p.order, b) >= cutoff) t_hi *= 2.0;
  for (int iter = 0; iter < 200 && (t_hi - t_lo) > 0.25 / fs; ++iter) {
    const double mid = 0.5 * (t_lo + t_hi);
    if (detail::gammatone_envelope(mid, p.order, b) >= cutoff)
      t_lo = mid;
    else
      t_hi = mid;
  }

  const auto support = static_cast<std::int64_t>(std::ceil(t_hi * fs));
  if (support < 2)
    throw ConfigError("make_gammatone: truncated support shorter than 2 samples");

  Kernel k;
  k.fs = fs;
  k.samples.resize(static_cast<std::size_t>(support));
  for (std::int64_t u = 0; u < support; ++u) {
    const double t = static_cast<double>(u) / fs;
    k.samples[static_cast<std::size_t>(u)] =
        detail::gammatone_envelope(t, p.order, b) *
        std::cos(2.0 * M_PI * p.f_center * t + p.phase);
  }
  detail::normalize_kernel(k.samples, fs, "make_gammatone");
  return k;
}

struct KernelBank {
  std::vector<Kernel> kernels;
  double fs = 0.0;
  int max_support = 0;
  std::uint64_t bank_hash = 0;

  int size() const { return static_cast<int>(kernels.size()); }
  double max_support_seconds() const {
    return static_cast<double>(max_support) / fs;
  }
  const Kernel& at(int id) const {
    if (id < 0 || id >= size()) throw ConfigError("kernel id out of range");
    return kernels[static_cast<std::size_t>(id)];
  }
};

namespace detail {

inline KernelBank finalize_bank(std::vector<Kernel> kernels, double fs) {
  if (kernels.empty()) throw ConfigError("kernel bank is empty");
  if (kernels.size() > 65535) throw ConfigError("kernel bank exceeds 65535 kernels");
  KernelBank bank;
  bank.fs = fs;
  Fnv1a h;
  h.add_u64(static_cast<std::uint64_t>(kernels.size()));
  h.add_double(fs);
  for (std::size_t j = 0; j < kernels.size(); ++j) {
    kernels[j].id = static_cast<int>(j);
    bank.max_support = std::max(bank.max_support, kernels[j].support_len());
    h.add_u64(static_cast<std::uint64_t>(kernels[j].samples.size()));
    h.add_doubles(kernels[j].samples);
  }
  bank.kernels = std::move(kernels);
  bank.bank_hash = h.digest();
  return bank;
}

}  // namespace detail

// Bank from gammatone parameter records, stable ids in record order.
inline KernelBank build_bank(const std::vector<GammatoneParams>& specs,
                             double fs, double trunc_rel = 1e-4) {
  if (specs.empty()) throw ConfigError("build_bank: empty spec");
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j)
      if (specs[i] == specs[j])
        throw ConfigError("build_bank: duplicate gammatone record");
  std::vector<Kernel> kernels;
  kernels.reserve(specs.size());
  for (const auto& s : specs) kernels.push_back(make_gammatone(s, fs, trunc_rel));
  return detail::finalize_bank(std::move(kernels), fs);
}

// Bank from explicit waveforms (normalized on construction).
inline KernelBank build_bank(const std::vector<Samples>& waveforms, double fs) {
  if (waveforms.empty()) throw ConfigError("build_bank: empty waveform list");
  if (!(fs > 0.0)) throw ConfigError("build_bank: fs must be positive");
  std::vector<Kernel> kernels;
  kernels.reserve(waveforms.size());
  for (const auto& w : waveforms) {
    if (w.empty()) throw ConfigError("build_bank: empty waveform");
    Kernel k;
    k.fs = fs;
    k.samples = w;
    detail::normalize_kernel(k.samples, fs, "build_bank");
    kernels.push_back(std::move(k));
  }
  return detail::finalize_bank(std::move(kernels), fs);
}

// Default auditory layout: m gammatones, ERB-spaced over [50 Hz, 0.45*fs].
inline KernelBank make_erb_bank(int m, double fs, double trunc_rel = 1e-4) {
  std::vector<GammatoneParams> specs;
  for (double f : erb_spaced_frequencies(m, 50.0, 0.45 * fs))
    specs.push_back({f, 4, 0.0, 0.0});
  return build_bank(specs, fs, trunc_rel);
}

// Text bank spec, one record per line:
//   gammatone f=<Hz> n=<int> b=<Hz|auto> phase=<rad>
// '#' starts a comment; blank lines are ignored. f is required, the rest
// default to n=4, b=auto, phase=0.
inline std::vector<GammatoneParams> parse_bank_spec(std::istream& in) {
  std::vector<GammatoneParams> specs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word != "gammatone")
      throw FormatError("bank spec line " + std::to_string(line_no) +
                        ": unknown record '" + word + "'");
    GammatoneParams p;
    bool have_f = false;
    std::string kv;
    while (ls >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw FormatError("bank spec line " + std::to_string(line_no) +
                          ": expected key=value, got '" + kv + "'");
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      try {
        if (key == "f") {
          p.f_center = std::stod(val);
          have_f = true;
        } else if (key == "n") {
          p.order = std::stoi(val);
        } else if (key == "b") {
          p.bandwidth = (val == "auto") ? 0.0 : std::stod(val);
        } else if (key == "phase") {
          p.phase = std::stod(val);
        } else {
          throw FormatError("bank spec line " + std::to_string(line_no) +
                            ": unknown key '" + key + "'");
        }
      } catch (const std::invalid_argument&) {
        throw FormatError("bank spec line " + std::to_string(line_no) +
                          ": bad value for '" + key + "'");
      }
    }
    if (!have_f)
      throw FormatError("bank spec line " + std::to_string(line_no) +
                        ": missing f=<Hz>");
    specs.push_back(p);
  }
  return specs;
}

inline std::vector<GammatoneParams> parse_bank_spec(const std::string& text) {
  std::istringstream ss(text);
  return parse_bank_spec(ss);
}

// Precomputed pairwise cross-correlations
//   rho_{jk}(l) = sum_u phi_j[u] * phi_k[u + l] / fs
// over all lags where the supports overlap. Gram entries between spikes i
// and k come out as rho_{j_i j_k}(t_k - t_i), making assembly O(1) per
// entry. Only pairs j <= k are stored; the mirror rho_{kj}(-l) shares the
// same sequence, so the symmetry holds exactly as computed.
class CorrTable {
 public:
  CorrTable() = default;

  explicit CorrTable(const KernelBank& bank)
      : m_(bank.size()), fs_(bank.fs), bank_hash_(bank.bank_hash) {
    supports_.resize(static_cast<std::size_t>(m_));
    for (int j = 0; j < m_; ++j) supports_[j] = bank.kernels[j].support_len();
    data_.resize(static_cast<std::size_t>(m_) * (m_ + 1) / 2);
    for (int j = 0; j < m_; ++j) {
      for (int k = j; k < m_; ++k) {
        Samples corr = detail::cross_correlate(bank.kernels[j].samples,
                                               bank.kernels[k].samples);
        const double inv_fs = 1.0 / fs_;
        for (double& v : corr) v *= inv_fs;
        if (j == k) {
          // Autocorrelation: mirror the non-negative lags so that
          // rho_jj(l) == rho_jj(-l) holds exactly, not just to rounding.
          const std::size_t center = bank.kernels[j].samples.size() - 1;
          for (std::size_t l = 1; l <= center; ++l)
            corr[center - l] = corr[center + l];
        }
        data_[pair_index(j, k)] = std::move(corr);
      }
    }
  }

  int size() const { return m_; }
  double fs() const { return fs_; }
  std::uint64_t bank_hash() const { return bank_hash_; }

  // rho_{jk}(lag); zero wherever the shifted supports no longer overlap.
  double rho(int j, int k, std::int64_t lag) const {
    if (j > k) {
      std::swap(j, k);
      lag = -lag;
    }
    const Samples& seq = data_[pair_index(j, k)];
    const std::int64_t idx = lag + supports_[static_cast<std::size_t>(j)] - 1;
    if (idx < 0 || idx >= static_cast<std::int64_t>(seq.size())) return 0.0;
    return seq[static_cast<std::size_t>(idx)];
  }

  // Largest |lag| with a stored value for the pair (j, k).
  std::int64_t max_lag(int j, int k) const {
    return std::max(supports_[static_cast<std::size_t>(j)],
                    supports_[static_cast<std::size_t>(k)]) -
           1;
  }

 private:
  std::size_t pair_index(int j, int k) const {
    // j <= k; row-major over the upper triangle.
    return static_cast<std::size_t>(j) * (2 * m_ - j - 1) / 2 +
           static_cast<std::size_t>(k);
  }

  int m_ = 0;
  double fs_ = 0.0;
  std::uint64_t bank_hash_ = 0;
  std::vector<int> supports_;
  std::vector<Samples> data_;
};

inline CorrTable cross_corr_table(const KernelBank& bank) {
  return CorrTable(bank);
}

}  // namespace spikecodec
