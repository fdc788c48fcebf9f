// include/spikecodec/sigio.hpp
//
// Bit-exact I/O: PCM16 mono WAV, the spike-train container, and the
// in-span synthetic signal generator.
//
// Spike file layout (little-endian throughout):
//   offset  size  field
//        0     4  magic "SPKC"
//        4     1  version (1)
//        5     1  flags (bit0: per-record thresholds stored)
//        6     2  reserved (0)
//        8     4  fs, u32
//       12     8  signal_len, u64
//       20     8  bank_hash, u64
//       28     8  spike_count, u64
//       36     8  gain, f64 (normalization applied at encode)
//       44     8  C, f64     -+
//       52     8  M, f64      | ahp triple; makes the file self-decoding
//       60     8  delta, f64 -+ (seconds)
//       68     -  records: kernel_id u16, sample_index u64
//                 [, threshold f64 iff flags bit0]
// With thresholds omitted the reader replays the threshold recursion from
// the ahp triple and reproduces the encoder's values bit-identically.
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

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "spikecodec/common.hpp"
#include "spikecodec/encoder.hpp"
#include "spikecodec/kernelbank.hpp"

namespace spikecodec {

inline constexpr std::size_t kSpikeFileHeaderBytes = 68;
inline constexpr std::size_t kSpikeRecordBytes = 10;  // +8 with thresholds

namespace detail {

struct LeWriter {
  std::string buf;
  void u16(std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* s, std::size_t n) { buf.append(s, n); }
};

struct LeReader {
  const unsigned char* p;
  const unsigned char* end;
  void need(std::size_t n, const char* what) const {
    if (static_cast<std::size_t>(end - p) < n)
      throw FormatError(std::string("truncated file while reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return *p++;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

inline void dump(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace detail

struct WavData {
  Samples samples;
  std::uint32_t fs = 0;
};

// PCM16 mono RIFF/WAVE only; samples scaled to [-1, 1] by /32768. Unknown
// chunks are skipped.
inline WavData read_wav(const std::string& path) {
  const std::string data = detail::slurp(path);
  detail::LeReader r{reinterpret_cast<const unsigned char*>(data.data()),
                     reinterpret_cast<const unsigned char*>(data.data()) +
                         data.size()};
  r.need(12, "RIFF header");
  if (std::memcmp(r.p, "RIFF", 4) != 0)
    throw FormatError(path + ": not a RIFF file");
  r.p += 4;
  r.u32("riff size");
  if (std::memcmp(r.p, "WAVE", 4) != 0)
    throw FormatError(path + ": not a WAVE file");
  r.p += 4;

  WavData wav;
  bool have_fmt = false, have_data = false;
  while (static_cast<std::size_t>(r.end - r.p) >= 8) {
    char id[4];
    std::memcpy(id, r.p, 4);
    r.p += 4;
    const std::uint32_t size = r.u32("chunk size");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      r.need(size, "fmt chunk");
      detail::LeReader f{r.p, r.p + size};
      const std::uint16_t format = f.u16("audio format");
      const std::uint16_t channels = f.u16("channels");
      const std::uint32_t rate = f.u32("sample rate");
      f.u32("byte rate");
      f.u16("block align");
      const std::uint16_t bits = f.u16("bits per sample");
      if (format != 1)
        throw FormatError(path + ": unsupported audio format (PCM only)");
      if (channels != 1)
        throw FormatError(path + ": unsupported channel count (mono only)");
      if (bits != 16)
        throw FormatError(path + ": unsupported bit depth (16-bit only)");
      wav.fs = rate;
      have_fmt = true;
      r.p += size;
    } else if (std::memcmp(id, "data", 4) == 0) {
      r.need(size, "data chunk");
      if (size % 2 != 0) throw FormatError(path + ": odd data chunk size");
      const std::size_t n = size / 2;
      wav.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto raw = static_cast<std::uint16_t>(r.p[2 * i] |
                                                    (r.p[2 * i + 1] << 8));
        wav.samples[i] =
            static_cast<double>(static_cast<std::int16_t>(raw)) / 32768.0;
      }
      have_data = true;
      r.p += size;
    } else {
      r.need(size, "chunk body");
      r.p += size;
    }
    if (size % 2 == 1 && r.p < r.end) ++r.p;  // chunk padding
  }
  if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
  if (!have_data) throw FormatError(path + ": missing data chunk");
  return wav;
}

// Exact inverse of read_wav's scaling, with saturating rounding.
inline void write_wav(const std::string& path, std::span<const double> samples,
                      std::uint32_t fs) {
  detail::LeWriter w;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  w.raw("RIFF", 4);
  w.u32(36 + data_bytes);
  w.raw("WAVE", 4);
  w.raw("fmt ", 4);
  w.u32(16);
  w.u16(1);       // PCM
  w.u16(1);       // mono
  w.u32(fs);
  w.u32(fs * 2);  // byte rate
  w.u16(2);       // block align
  w.u16(16);      // bits per sample
  w.raw("data", 4);
  w.u32(data_bytes);
  for (double v : samples) {
    double scaled = std::round(v * 32768.0);
    if (scaled > 32767.0) scaled = 32767.0;
    if (scaled < -32768.0) scaled = -32768.0;
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  detail::dump(path, w.buf);
}

struct SpikeFileData {
  SpikeTrain train;
  ThresholdParams params;
  double gain = 1.0;
  bool thresholds_stored = false;
};

inline void write_spikes(const std::string& path, const SpikeTrain& train,
                         const ThresholdParams& params, bool store_thresholds,
                         double gain = 1.0) {
  for (std::size_t i = 1; i < train.size(); ++i)
    if (!spike_order(train.spikes[i - 1], train.spikes[i]))
      throw InputError("write_spikes: records must be sorted by (time, kernel)");
  detail::LeWriter w;
  w.raw("SPKC", 4);
  w.buf.push_back(static_cast<char>(1));  // version
  w.buf.push_back(static_cast<char>(store_thresholds ? 1 : 0));
  w.u16(0);  // reserved
  w.u32(static_cast<std::uint32_t>(std::llround(train.fs)));
  w.u64(static_cast<std::uint64_t>(train.signal_len));
  w.u64(train.bank_hash);
  w.u64(train.size());
  w.f64(gain);
  w.f64(params.baseline);
  w.f64(params.ahp_jump);
  w.f64(params.refractory);
  for (const Spike& s : train.spikes) {
    w.u16(static_cast<std::uint16_t>(s.kernel_id));
    w.u64(static_cast<std::uint64_t>(s.sample_index));
    if (store_thresholds) w.f64(s.threshold);
  }
  detail::dump(path, w.buf);
}

// Read a spike file. Without stored thresholds, every threshold is
// reconstructed by replaying the ahp recursion over the spike times - the
// same function the encoder evaluated, hence bit-identical values.
inline SpikeFileData read_spikes(const std::string& path) {
  const std::string data = detail::slurp(path);
  detail::LeReader r{reinterpret_cast<const unsigned char*>(data.data()),
                     reinterpret_cast<const unsigned char*>(data.data()) +
                         data.size()};
  r.need(4, "magic");
  if (std::memcmp(r.p, "SPKC", 4) != 0)
    throw FormatError(path + ": bad magic (not a spike file)");
  r.p += 4;
  const std::uint8_t version = r.u8("version");
  if (version != 1)
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  const std::uint8_t flags = r.u8("flags");
  r.u16("reserved");

  SpikeFileData out;
  out.thresholds_stored = (flags & 1) != 0;
  out.train.fs = static_cast<double>(r.u32("fs"));
  out.train.signal_len = static_cast<std::int64_t>(r.u64("signal_len"));
  out.train.bank_hash = r.u64("bank_hash");
  const std::uint64_t count = r.u64("spike_count");
  out.gain = r.f64("gain");
  out.params.baseline = r.f64("C");
  out.params.ahp_jump = r.f64("M");
  out.params.refractory = r.f64("delta");

  const std::size_t record_bytes =
      kSpikeRecordBytes + (out.thresholds_stored ? 8 : 0);
  if (static_cast<std::uint64_t>(r.end - r.p) != count * record_bytes)
    throw FormatError(path + ": spike_count disagrees with the file size");
  out.train.spikes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Spike s;
    s.kernel_id = r.u16("kernel_id");
    s.sample_index = static_cast<std::int64_t>(r.u64("sample_index"));
    if (out.thresholds_stored) s.threshold = r.f64("threshold");
    if (!out.train.spikes.empty() &&
        !spike_order(out.train.spikes.back(), s))
      throw FormatError(path + ": records are not sorted by (time, kernel)");
    out.train.spikes.push_back(s);
  }
  if (r.p != r.end) throw FormatError(path + ": trailing bytes");

  if (!out.thresholds_stored) {
    std::map<int, std::vector<std::int64_t>> history;
    for (Spike& s : out.train.spikes) {
      auto& h = history[s.kernel_id];
      s.threshold = threshold_at(h, s.sample_index, out.params, out.train.fs);
      h.push_back(s.sample_index);
    }
  }
  return out;
}

struct SynthComponent {
  int kernel_id = 0;
  std::int64_t time = 0;  // samples
  double coeff = 0.0;
};

struct SynthSpec {
  std::vector<SynthComponent> components;
  std::int64_t length = 0;  // samples
};

struct SynthResult {
  Samples samples;
  // Exact inner products <X, phi_p> per component; feeding these back as
  // spike thresholds makes the signal perfectly decodable.
  std::vector<double> forced_thresholds;
};

// Materialize a linear combination of shifted, time-reversed kernels.
inline SynthResult synth_in_span(const SynthSpec& spec, const KernelBank& bank) {
  if (spec.length < 0) throw ConfigError("synth_in_span: negative length");
  SynthResult result;
  result.samples.assign(static_cast<std::size_t>(spec.length), 0.0);
  for (const SynthComponent& c : spec.components) {
    if (c.kernel_id < 0 || c.kernel_id >= bank.size())
      throw ConfigError("synth_in_span: kernel id out of range");
    if (c.time < 0 || c.time >= spec.length)
      throw ConfigError("synth_in_span: component time outside the signal");
    if (!std::isfinite(c.coeff))
      throw ConfigError("synth_in_span: non-finite coefficient");
    const Kernel& kernel = bank.at(c.kernel_id);
    for (int u = 0; u < kernel.support_len(); ++u) {
      const std::int64_t t = c.time - u;
      if (t < 0) break;
      result.samples[static_cast<std::size_t>(t)] +=
          c.coeff * kernel.samples[static_cast<std::size_t>(u)];
    }
  }
  result.forced_thresholds.reserve(spec.components.size());
  for (const SynthComponent& c : spec.components) {
    const Kernel& kernel = bank.at(c.kernel_id);
    double ip = 0.0;
    for (int u = 0; u < kernel.support_len(); ++u) {
      const std::int64_t t = c.time - u;
      if (t < 0) break;
      ip += result.samples[static_cast<std::size_t>(t)] *
            kernel.samples[static_cast<std::size_t>(u)];
    }
    result.forced_thresholds.push_back(ip / bank.fs);
  }
  return result;
}

// SpikeTrain carrying the components as spikes with their exact inner
// products as thresholds; the standard perfect-reconstruction fixture.
inline SpikeTrain forced_train(const SynthSpec& spec, const KernelBank& bank,
                               const SynthResult& synth) {
  SpikeTrain train;
  train.fs = bank.fs;
  train.signal_len = spec.length;
  train.bank_hash = bank.bank_hash;
  for (std::size_t i = 0; i < spec.components.size(); ++i)
    train.spikes.push_back({spec.components[i].kernel_id,
                            spec.components[i].time,
                            synth.forced_thresholds[i]});
  std::sort(train.spikes.begin(), train.spikes.end(), spike_order);
  return train;
}

}  // namespace spikecodec
