// tools/spikecodec_main.cpp
//
// Command-line toolkit: encode, decode, evaluate, sweep, synth, validate,
// bench. Exit codes: 0 success, 1 usage/config, 2 file format or
// compatibility, 3 numeric/domain failures (including failed validation).
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

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <string>
#include <vector>

#include "spikecodec/spikecodec.hpp"

namespace fs = std::filesystem;
using namespace spikecodec;
using nlohmann::json;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int thread_budget() {
  if (const char* env = std::getenv("SPIKECODEC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// --bank accepts either a spec file path or the shorthand erb:<m> for the
// default ERB-spaced gammatone layout.
KernelBank load_bank(const std::string& bank_arg, double fs) {
  if (bank_arg.rfind("erb:", 0) == 0) {
    const int m = std::atoi(bank_arg.c_str() + 4);
    if (m < 1) throw ConfigError("--bank erb:<m> needs m >= 1");
    return make_erb_bank(m, fs);
  }
  std::ifstream in(bank_arg);
  if (!in) throw IoError("cannot open bank spec " + bank_arg);
  const auto specs = parse_bank_spec(in);
  if (specs.empty()) throw ConfigError(bank_arg + ": no kernel records");
  return build_bank(specs, fs);
}

void check_window_guard(int w, bool allow_large) {
  if (w > 15000)
    throw ConfigError("window size " + std::to_string(w) + " exceeds 15000");
  if (w > 2000 && !allow_large)
    throw ConfigError("window size " + std::to_string(w) +
                      " needs --allow-large-window");
}

struct AhpFlags {
  double C = 1e-3;
  double M = 0.65;
  double delta = 0.02;
  ThresholdParams params() const { return {C, M, delta}; }
};

void add_ahp_flags(CLI::App* cmd, AhpFlags& ahp) {
  cmd->add_option("--C", ahp.C, "baseline threshold");
  cmd->add_option("--M", ahp.M, "ahp jump added per spike");
  cmd->add_option("--delta", ahp.delta, "refractory period, seconds");
}

// ---------------------------------------------------------------------------
// Synthetic corpus: deterministic in-span snippets for demos and sweeps.

Samples synth_snippet(SplitMix64& rng, const KernelBank& bank,
                      std::int64_t length, int components) {
  SynthSpec spec;
  spec.length = length;
  for (int i = 0; i < components; ++i) {
    const int kid = static_cast<int>(rng.next_below(bank.size()));
    const std::int64_t lo = bank.at(kid).support_len();
    if (lo >= length) continue;
    const std::int64_t t =
        lo + static_cast<std::int64_t>(
                 rng.next_below(static_cast<std::uint64_t>(length - lo)));
    const double mag = rng.uniform(0.15, 1.0);
    spec.components.push_back({kid, t, rng.next_below(2) ? mag : -mag});
  }
  SynthResult synth = synth_in_span(spec, bank);
  const double peak = input_peak(synth.samples);
  if (peak > 0.0)
    for (double& v : synth.samples) v *= 0.9 / peak;
  return synth.samples;
}

// ---------------------------------------------------------------------------
// encode

int cmd_encode(const std::string& wav_path, const std::string& out_path,
               const std::string& bank_arg, const AhpFlags& ahp,
               bool store_measured) {
  const WavData wav = read_wav(wav_path);
  const KernelBank bank = load_bank(bank_arg, static_cast<double>(wav.fs));
  const ThresholdParams params = ahp.params();
  params.validate();

  Samples x = wav.samples;
  const double peak = input_peak(x);
  const double gain = peak > 0.0 ? peak : 1.0;
  for (double& v : x) v /= gain;
  if (!params.stable_for(1.0, bank.max_support_seconds()))
    std::fprintf(stderr,
                 "warning: M = %g is below the stability bound %g; "
                 "interspike intervals may dip under delta/2\n",
                 params.ahp_jump,
                 2.0 * std::sqrt(bank.max_support_seconds()));

  const double t0 = now_ms();
  const SpikeTrain train = encode(x, bank, params, store_measured);
  const double enc_ms = now_ms() - t0;
  write_spikes(out_path, train, params, store_measured, gain);

  const double nyq =
      train.signal_len > 0
          ? static_cast<double>(train.size()) / train.signal_len
          : 0.0;
  std::printf("spikes: %zu\n", train.size());
  std::printf("nyquist_fraction: %.6f\n", nyq);
  std::printf("bank_hash: %016llx\n",
              static_cast<unsigned long long>(bank.bank_hash));
  std::printf("encode_ms: %.1f\n", enc_ms);
  return 0;
}

// ---------------------------------------------------------------------------
// decode

int cmd_decode(const std::string& spk_path, const std::string& out_path,
               const std::string& bank_arg, int window, bool batch,
               bool allow_large, const std::string& reference, bool trace) {
  const SpikeFileData file = read_spikes(spk_path);
  const KernelBank bank = load_bank(bank_arg, file.train.fs);
  if (bank.bank_hash != file.train.bank_hash)
    throw CompatError(spk_path + ": spike file was encoded with a different bank");
  const CorrTable table = cross_corr_table(bank);

  const double t0 = now_ms();
  Samples out;
  if (batch) {
    const Reconstruction rec = decode(file.train, bank, table);
    out = rec.samples;
    std::fprintf(stderr, "solver: %s (condition ~ %.3g, rank %d)\n",
                 rec.report.method_name(), rec.report.condition_estimate,
                 rec.report.rank);
  } else {
    check_window_guard(window, allow_large);
    WindowState state =
        make_window_state(bank, table, window, file.train.signal_len);
    std::size_t done = 0;
    for (const Spike& s : file.train.spikes) {
      push_spike(state, s);
      ++done;
      if (trace && done % 500 == 0) {
        json j = {{"processed", done},
                  {"skipped", state.skipped},
                  {"max_condition", state.max_condition_seen}};
        std::fprintf(stderr, "%s\n", j.dump().c_str());
      }
    }
    if (trace) {
      json j = {{"processed", done},
                {"skipped", state.skipped},
                {"max_condition", state.max_condition_seen}};
      std::fprintf(stderr, "%s\n", j.dump().c_str());
    }
    out = std::move(state.out);
  }
  const double dec_ms = now_ms() - t0;

  for (double& v : out) v *= file.gain;
  write_wav(out_path, out, static_cast<std::uint32_t>(file.train.fs));
  std::printf("decode_ms: %.1f\n", dec_ms);

  if (!reference.empty()) {
    const WavData ref = read_wav(reference);
    const std::size_t n = std::min(ref.samples.size(), out.size());
    const double snr =
        snr_db(std::span(ref.samples).first(n), std::span(out).first(n));
    std::printf("snr_db: %.3f\n", snr);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

int cmd_evaluate(const std::string& ref_path, const std::string& spk_path,
                 const std::string& rec_path) {
  const WavData ref = read_wav(ref_path);
  const WavData rec = read_wav(rec_path);
  const SpikeFileData file = read_spikes(spk_path);
  const EvalReport report =
      evaluate(ref.samples, file.train, rec.samples, file.params);
  std::printf("%s\n", report.to_json().dump().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  std::string snippet;
  double refractory, C, M;
  int w;
  bool snr_defined;
  double snr, nyq, enc_ms, dec_ms;
};

int cmd_sweep(const std::string& input, const std::string& bank_arg,
              const std::string& deltas_arg, int window, double window_coeff,
              bool allow_large, const std::string& out_csv,
              const std::string& gnuplot, const AhpFlags& ahp,
              bool store_measured, std::uint64_t seed, double fs_arg,
              double snippet_seconds) {
  std::vector<double> deltas;
  {
    std::stringstream ss(deltas_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) deltas.push_back(std::stod(tok));
    if (deltas.empty()) throw ConfigError("--deltas parsed to an empty grid");
  }

  // Gather snippets: wav files from a directory, or synth:<n>.
  std::vector<std::pair<std::string, Samples>> snippets;
  double fs = fs_arg;
  if (input.rfind("synth:", 0) == 0) {
    const int count = std::atoi(input.c_str() + 6);
    if (count < 1) throw ConfigError("--input synth:<n> needs n >= 1");
    const KernelBank bank = load_bank(bank_arg, fs);
    SplitMix64 rng(seed);
    const auto len = static_cast<std::int64_t>(snippet_seconds * fs);
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "synth_%03d", i);
      snippets.emplace_back(name,
                            synth_snippet(rng, bank, len, 10 + 30 * (i % 3)));
    }
  } else {
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(input))
      if (entry.path().extension() == ".wav") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw IoError(input + ": no .wav files");
    fs = 0.0;
    for (const auto& p : paths) {
      const WavData wav = read_wav(p.string());
      if (fs != 0.0 && static_cast<double>(wav.fs) != fs)
        throw ConfigError(p.string() + ": sample rate differs from the rest of the corpus");
      fs = static_cast<double>(wav.fs);
      snippets.emplace_back(p.stem().string(), wav.samples);
    }
  }

  const KernelBank bank = load_bank(bank_arg, fs);
  const CorrTable table = cross_corr_table(bank);

  struct Cell {
    std::size_t snippet;
    double delta;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < snippets.size(); ++s)
    for (double d : deltas) cells.push_back({s, d});

  auto run_cell = [&](const Cell& cell) -> SweepRow {
    const auto& [name, raw] = snippets[cell.snippet];
    Samples x = raw;
    const double peak = input_peak(x);
    if (peak > 0.0)
      for (double& v : x) v /= peak;
    ThresholdParams p = ahp.params();
    p.refractory = cell.delta;
    int w = window;
    if (w <= 0)
      w = std::clamp(static_cast<int>(std::lround(window_coeff / cell.delta)),
                     1, 15000);
    check_window_guard(w, allow_large);

    SweepRow row{name, cell.delta, p.baseline, p.ahp_jump, w,
                 false, 0.0, 0.0, 0.0, 0.0};
    const double t0 = now_ms();
    const SpikeTrain train = encode(x, bank, p, store_measured);
    row.enc_ms = now_ms() - t0;
    const double t1 = now_ms();
    const StreamResult rec = stream_decode(train, bank, table, w);
    row.dec_ms = now_ms() - t1;
    const EvalReport report = evaluate(x, train, rec.samples, p);
    row.snr_defined = report.snr_defined;
    row.snr = report.snr_db;
    row.nyq = report.nyquist_fraction;
    return row;
  };

  std::vector<SweepRow> rows;
  const int threads = std::min<int>(thread_budget(), static_cast<int>(cells.size()));
  if (threads <= 1) {
    for (const Cell& cell : cells) {
      try {
        rows.push_back(run_cell(cell));
      } catch (const Error& e) {
        std::fprintf(stderr, "sweep: cell (%s, %g) failed: %s\n",
                     snippets[cell.snippet].first.c_str(), cell.delta, e.what());
      }
    }
  } else {
    std::vector<std::future<std::vector<SweepRow>>> futures;
    const std::size_t chunk = (cells.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t lo = t * chunk;
      const std::size_t hi = std::min(cells.size(), lo + chunk);
      futures.push_back(std::async(std::launch::async, [&, lo, hi] {
        std::vector<SweepRow> part;
        for (std::size_t i = lo; i < hi; ++i) {
          try {
            part.push_back(run_cell(cells[i]));
          } catch (const Error& e) {
            std::fprintf(stderr, "sweep: cell (%s, %g) failed: %s\n",
                         snippets[cells[i].snippet].first.c_str(),
                         cells[i].delta, e.what());
          }
        }
        return part;
      }));
    }
    for (auto& f : futures)
      for (auto& r : f.get()) rows.push_back(std::move(r));
  }

  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.snippet != b.snippet) return a.snippet < b.snippet;
    return a.refractory > b.refractory;
  });

  std::ofstream csv(out_csv);
  if (!csv) throw IoError("cannot create " + out_csv);
  csv << "snippet,refractory,C,M,w,snr_db,nyq_frac,enc_ms,dec_ms\n";
  char line[256];
  for (const SweepRow& r : rows) {
    std::snprintf(line, sizeof line, "%s,%.6g,%.6g,%.6g,%d,%.4f,%.6f,%.1f,%.1f\n",
                  r.snippet.c_str(), r.refractory, r.C, r.M, r.w,
                  r.snr_defined ? r.snr : std::nan(""), r.nyq, r.enc_ms,
                  r.dec_ms);
    csv << line;
  }
  csv.close();
  std::printf("sweep: %zu rows -> %s\n", rows.size(), out_csv.c_str());

  if (!gnuplot.empty()) {
    std::vector<std::pair<double, double>> pts;
    for (const SweepRow& r : rows)
      if (r.snr_defined) pts.emplace_back(r.nyq, r.snr);
    std::sort(pts.begin(), pts.end());
    std::ofstream gp(gnuplot);
    if (!gp) throw IoError("cannot create " + gnuplot);
    gp << "# nyquist_fraction snr_db  (plot with: plot '" << gnuplot
       << "' using 1:2 with points)\n";
    for (const auto& [nyq, snr] : pts) {
      std::snprintf(line, sizeof line, "%.6f %.4f\n", nyq, snr);
      gp << line;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const std::string& out, const std::string& bank_arg, double fs,
              double seconds, int components, std::uint64_t seed,
              const std::string& corpus_dir, int corpus_count) {
  const KernelBank bank = load_bank(bank_arg, fs);
  SplitMix64 rng(seed);
  const auto len = static_cast<std::int64_t>(seconds * fs);
  if (!corpus_dir.empty()) {
    fs::create_directories(corpus_dir);
    for (int i = 0; i < corpus_count; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "snippet_%03d.wav", i);
      const Samples x =
          synth_snippet(rng, bank, len, components + 10 * (i % 3));
      write_wav((fs::path(corpus_dir) / name).string(), x,
                static_cast<std::uint32_t>(fs));
    }
    std::printf("synth: %d snippets -> %s\n", corpus_count, corpus_dir.c_str());
    return 0;
  }
  const Samples x = synth_snippet(rng, bank, len, components);
  write_wav(out, x, static_cast<std::uint32_t>(fs));
  std::printf("synth: %lld samples -> %s\n", static_cast<long long>(len),
              out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// validate: pass/fail report over the mathematical property suites.

struct CheckResult {
  std::string name;
  bool pass;
  std::string detail;
};

void report(std::vector<CheckResult>& out, const std::string& name, bool pass,
            const std::string& detail) {
  out.push_back({name, pass, detail});
}

void validate_sine_chain(std::vector<CheckResult>& out) {
  const SineChain chain = make_sine_chain(40, 16000.0, 500.0);
  const CorrTable table = cross_corr_table(chain.bank);
  const GramSystem sys = assemble(chain.spikes, table);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < sys.P.rows(); ++i)
    for (Eigen::Index j = 0; j < sys.P.cols(); ++j) {
      const double expect = i == j ? 1.0 : (std::abs(i - j) == 1 ? -0.5 : 0.0);
      worst = std::max(worst, std::abs(sys.P(i, j) - expect));
    }
  report(out, "sine-chain-gram", worst < 1e-9,
         "max |entry - {1,-1/2,0}| = " + std::to_string(worst));

  double inv_err = 0.0;
  for (int dim : {5, 20, 49}) {
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(dim, dim);
    for (int i = 0; i + 1 < dim; ++i) P(i, i + 1) = P(i + 1, i) = -0.5;
    const Eigen::MatrixXd inv = P.inverse();
    for (int i = 1; i <= dim; ++i)
      for (int j = 1; j <= dim; ++j)
        inv_err = std::max(inv_err,
                           std::abs(inv(i - 1, j - 1) -
                                    SineChain::tridiag_inverse_entry(dim, i, j)));
  }
  report(out, "sine-chain-inverse", inv_err < 1e-9,
         "max closed-form deviation = " + std::to_string(inv_err));

  const SineChain big = make_sine_chain(120, 16000.0, 500.0);
  const auto vals = estimate_beta_all(big.spikes, cross_corr_table(big.bank));
  double vmax = 0.0;
  for (double v : vals) vmax = std::max(vmax, v * v);
  report(out, "sine-chain-degeneracy", vmax >= 0.97,
         "max squared projection = " + std::to_string(vmax));
}

void validate_condition_bounds(std::vector<CheckResult>& out,
                               std::uint64_t seed) {
  SplitMix64 rng(seed);
  bool ok = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 50 && ok; ++trial) {
    const int k = 2 + static_cast<int>(rng.next_below(11));
    const double beta = rng.uniform(0.05, 0.85);
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(k, k);
    V(0, 0) = 1.0;
    for (int i = 1; i < k; ++i) {
      const Eigen::MatrixXd Vi = V.leftCols(i);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Vi.transpose() * Vi);
      const Eigen::VectorXd u =
          (Vi * es.eigenvectors().col(0)) / std::sqrt(es.eigenvalues()(0));
      V.col(i) = beta * u;
      V(i, i) += std::sqrt(1.0 - beta * beta);
    }
    const Eigen::MatrixXd P = V.transpose() * V;
    const auto past = beta_past_from_gram(P);
    double measured = 0.0;
    for (double v : past) measured = std::max(measured, v);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    const double kappa = es.eigenvalues()(k - 1) / es.eigenvalues()(0);
    const ConditionBounds b = condition_bounds(k, measured);
    ok = kappa >= b.lower * (1 - 1e-6) && kappa <= b.upper * (1 + 1e-6);
    worst_margin = std::min(worst_margin,
                            std::min(kappa / b.lower, b.upper / kappa));
  }
  report(out, "condition-bounds", ok,
         "min envelope margin factor = " + std::to_string(worst_margin));
}

void validate_encoder_bounds(std::vector<CheckResult>& out,
                             std::uint64_t seed) {
  const double fs = 8000.0;
  const KernelBank bank = make_erb_bank(4, fs);
  const double delta = 0.02;
  const ThresholdParams p{
      2e-4, 2.0 * std::sqrt(bank.max_support_seconds()) * 1.05, delta};
  std::int64_t isi_violations = 0, rate_violations = 0, total = 0;
  double min_isi = std::numeric_limits<double>::infinity();
  SplitMix64 rng(seed);
  for (int run = 0; run < 20; ++run) {
    Samples x(8000, 0.0);
    {
      SplitMix64 r2(rng.next_u64());
      const int parts = 8;
      for (int q = 0; q < parts; ++q) {
        const double f = r2.uniform(60.0, 0.35 * fs);
        const double ph = r2.uniform(0.0, 2.0 * M_PI);
        const double a = r2.uniform(0.1, 1.0);
        for (std::size_t t = 0; t < x.size(); ++t)
          x[t] += a * std::sin(2.0 * M_PI * f * t / fs + ph);
      }
      const double peak = input_peak(x);
      for (double& v : x) v /= peak;
    }
    const SpikeTrain train = encode(x, bank, p);
    total += static_cast<std::int64_t>(train.size());
    std::map<int, std::int64_t> last;
    for (const Spike& s : train.spikes) {
      auto it = last.find(s.kernel_id);
      if (it != last.end()) {
        const auto isi = static_cast<double>(s.sample_index - it->second);
        min_isi = std::min(min_isi, isi);
        if (isi <= 0.5 * p.delta_samples(fs)) ++isi_violations;
      }
      last[s.kernel_id] = s.sample_index;
    }
    if (train.size() / train.duration_seconds() > 2.0 * bank.size() / delta)
      ++rate_violations;
  }
  report(out, "isi-bound", isi_violations == 0 && total > 0,
         "min interspike interval = " + std::to_string(min_isi) +
             " samples vs delta/2 = " +
             std::to_string(0.5 * p.delta_samples(fs)));
  report(out, "rate-bound", rate_violations == 0 && total > 0,
         "violations = " + std::to_string(rate_violations));
}

void validate_replay(std::vector<CheckResult>& out, std::uint64_t seed) {
  const double fs = 8000.0;
  const KernelBank bank = make_erb_bank(4, fs);
  SplitMix64 rng(seed);
  bool ok = true;
  for (int run = 0; run < 10 && ok; ++run) {
    Samples x(6000, 0.0);
    for (std::size_t t = 0; t < x.size(); ++t)
      x[t] = std::sin(2.0 * M_PI * rng.uniform(100.0, 900.0) * t / fs);
    const ThresholdParams p{2e-4, 1e-3, rng.uniform(0.005, 0.03)};
    const SpikeTrain train = encode(x, bank, p);
    std::map<int, std::vector<std::int64_t>> history;
    for (const Spike& s : train.spikes) {
      auto& h = history[s.kernel_id];
      if (threshold_at(h, s.sample_index, p, fs) != s.threshold) ok = false;
      h.push_back(s.sample_index);
    }
  }
  report(out, "threshold-replay", ok, "bit-identical over 10 random trains");
}

void validate_window_convergence(std::vector<CheckResult>& out,
                                 std::uint64_t seed) {
  const double fs = 8000.0;
  const KernelBank bank = make_erb_bank(5, fs);
  const CorrTable table = cross_corr_table(bank);
  const int windows[3] = {25, 50, 100};
  double err[3] = {0, 0, 0};
  double full_rel = 0.0;
  SplitMix64 rng(seed);
  for (int run = 0; run < 5; ++run) {
    Samples x(8000, 0.0);
    for (std::size_t t = 0; t < x.size(); ++t)
      x[t] = 0.8 * std::sin(2.0 * M_PI * rng.uniform(80.0, 2000.0) * t / fs) +
             0.2 * std::sin(2.0 * M_PI * rng.uniform(80.0, 2000.0) * t / fs);
    double conv_peak = 0.0;
    for (const Kernel& k : bank.kernels)
      conv_peak = std::max(conv_peak, input_peak(convolve(x, k)));
    const SpikeTrain train =
        encode(x, bank, {0.05 * conv_peak, 2.0 * conv_peak, 0.01}, true);
    const Reconstruction batch = decode(train, bank, table);
    auto l2 = [](const Samples& a, const Samples& b) {
      double s = 0;
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    };
    for (int i = 0; i < 3; ++i)
      err[i] += l2(batch.samples,
                   stream_decode(train, bank, table, windows[i]).samples);
    const StreamResult full = stream_decode(
        train, bank, table, static_cast<int>(train.size()));
    double norm = 0;
    for (double v : batch.samples) norm += v * v;
    full_rel = std::max(full_rel,
                        l2(batch.samples, full.samples) /
                            (std::sqrt(norm) + 1e-300));
  }
  const bool monotone = err[1] <= err[0] + 1e-9 && err[2] <= err[1] + 1e-9;
  report(out, "window-convergence", monotone && full_rel < 1e-6,
         "errors " + std::to_string(err[0]) + " >= " + std::to_string(err[1]) +
             " >= " + std::to_string(err[2]) +
             ", full-window rel = " + std::to_string(full_rel));
}

void validate_partition(std::vector<CheckResult>& out, std::uint64_t seed) {
  const double fs = 8000.0;
  const KernelBank bank = make_erb_bank(4, fs);
  const ThresholdParams p{2e-4, 0.65, 0.02};
  SplitMix64 rng(seed);
  Samples x(16000, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t)
    x[t] = std::sin(2.0 * M_PI * 220.0 * t / fs) * 0.5 +
           std::sin(2.0 * M_PI * rng.uniform(300.0, 1500.0) * t / fs) * 0.5;
  const SpikeTrain train = encode(x, bank, p);
  const Partition part = partition_overlap(train, bank);
  std::size_t covered = 0;
  for (const auto& [lo, hi] : part.groups) covered += hi - lo + 1;
  const bool ok = covered == train.size() &&
                  part.d_max <= partition_group_bound(bank, p);
  report(out, "partition", ok,
         "d_max = " + std::to_string(part.d_max) +
             " <= bound " + std::to_string(partition_group_bound(bank, p)));
}

int cmd_validate(std::uint64_t seed, const std::string& only) {
  std::vector<CheckResult> results;
  auto want = [&](const char* name) {
    return only.empty() || std::string(name).find(only) != std::string::npos;
  };
  if (want("sine-chain")) validate_sine_chain(results);
  if (want("condition-bounds")) validate_condition_bounds(results, seed);
  if (want("isi-bound") || want("rate-bound")) validate_encoder_bounds(results, seed);
  if (want("threshold-replay")) validate_replay(results, seed);
  if (want("window-convergence")) validate_window_convergence(results, seed);
  if (want("partition")) validate_partition(results, seed);
  if (results.empty()) throw ConfigError("--only '" + only + "' matched no checks");

  bool all_pass = true;
  for (const CheckResult& r : results) {
    std::printf("%s %-20s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 3;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(const std::string& lengths_arg, int window, int repeat,
              std::uint64_t seed, double fs) {
  std::vector<double> lengths;
  {
    std::stringstream ss(lengths_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) lengths.push_back(std::stod(tok));
  }
  if (lengths.empty()) throw ConfigError("--lengths parsed empty");

  const KernelBank bank = make_erb_bank(6, fs);
  const CorrTable table = cross_corr_table(bank);
  std::printf("%8s %8s %10s %10s\n", "seconds", "spikes", "encode_ms",
              "decode_ms");
  std::vector<double> dec_times;
  for (double sec : lengths) {
    SplitMix64 rng(seed);
    const Samples x = synth_snippet(
        rng, bank, static_cast<std::int64_t>(sec * fs),
        static_cast<int>(40 * sec));
    double conv_peak = 0.0;
    for (const Kernel& k : bank.kernels)
      conv_peak = std::max(conv_peak, input_peak(convolve(x, k)));
    // Dense spiking keeps the spike count well above the window size, the
    // regime where per-spike cost is constant and decode time is linear.
    const ThresholdParams p{0.02 * conv_peak, 2.0 * conv_peak, 0.0015};
    double enc_ms = 0.0, dec_ms = 0.0;
    std::size_t n_spikes = 0;
    for (int r = 0; r < repeat; ++r) {
      const double t0 = now_ms();
      const SpikeTrain train = encode(x, bank, p, true);
      enc_ms += now_ms() - t0;
      const double t1 = now_ms();
      const StreamResult rec = stream_decode(train, bank, table, window);
      dec_ms += now_ms() - t1;
      n_spikes = train.size();
      (void)rec;
    }
    enc_ms /= repeat;
    dec_ms /= repeat;
    dec_times.push_back(dec_ms);
    std::printf("%8.2f %8zu %10.1f %10.1f\n", sec, n_spikes, enc_ms, dec_ms);
  }
  bool linear = true;
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    const double len_ratio = lengths[i] / lengths[i - 1];
    if (std::abs(len_ratio - 2.0) < 0.01) {
      const double time_ratio = dec_times[i] / std::max(dec_times[i - 1], 1e-9);
      std::printf("decode scaling x2 at %g s: %.2fx\n", lengths[i - 1],
                  time_ratio);
      if (time_ratio > 2.5) linear = false;
    }
  }
  if (!linear) {
    std::fprintf(stderr, "bench: windowed decode scaled worse than 2.5x per doubling\n");
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spike-train signal codec"};
  app.require_subcommand(1);

  // encode
  auto* enc = app.add_subcommand("encode", "encode a WAV file into spikes");
  std::string enc_wav, enc_out, enc_bank = "erb:16";
  AhpFlags enc_ahp;
  bool enc_measured = false;
  enc->add_option("input", enc_wav, "input .wav (PCM16 mono)")->required();
  enc->add_option("output", enc_out, "output .spk path")->required();
  enc->add_option("--bank", enc_bank, "bank spec file or erb:<m>");
  add_ahp_flags(enc, enc_ahp);
  enc->add_flag("--store-measured", enc_measured,
                "record measured convolution values as thresholds");

  // decode
  auto* dec = app.add_subcommand("decode", "reconstruct a WAV from spikes");
  std::string dec_spk, dec_out, dec_bank = "erb:16", dec_ref;
  int dec_window = 200;
  bool dec_batch = false, dec_allow_large = false, dec_trace = false;
  dec->add_option("input", dec_spk, "input .spk")->required();
  dec->add_option("output", dec_out, "output .wav")->required();
  dec->add_option("--bank", dec_bank, "bank spec file or erb:<m>");
  dec->add_option("--window", dec_window, "window size (spikes)");
  dec->add_flag("--batch", dec_batch, "full minimum-norm solve instead of windowed");
  dec->add_flag("--allow-large-window", dec_allow_large,
                "permit windows above 2000 (up to 15000)");
  dec->add_option("--reference", dec_ref, "reference wav; prints SNR");
  dec->add_flag("--trace", dec_trace, "JSON-lines progress on stderr");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "report SNR and rate metrics as JSON");
  std::string ev_ref, ev_spk, ev_rec;
  ev->add_option("reference", ev_ref, "original .wav")->required();
  ev->add_option("spikes", ev_spk, "spike file")->required();
  ev->add_option("reconstruction", ev_rec, "reconstructed .wav")->required();

  // sweep
  auto* sw = app.add_subcommand("sweep", "refractory sweep over a corpus");
  std::string sw_input, sw_bank = "erb:16", sw_deltas = "0.25,0.1,0.04,0.015,0.005";
  std::string sw_csv = "sweep.csv", sw_gnuplot;
  int sw_window = 0;
  double sw_coeff = 0.4, sw_fs = 16000.0, sw_seconds = 0.5;
  AhpFlags sw_ahp;
  bool sw_measured = false, sw_allow_large = false;
  std::uint64_t sw_seed = 1;
  sw->add_option("--input", sw_input, "wav directory or synth:<n>")->required();
  sw->add_option("--bank", sw_bank, "bank spec file or erb:<m>");
  sw->add_option("--deltas", sw_deltas, "comma-separated refractory grid, seconds");
  sw->add_option("--window", sw_window, "fixed window (0 = use --window-coeff)");
  sw->add_option("--window-coeff", sw_coeff,
                 "w = coeff / delta when --window is 0");
  sw->add_option("--out", sw_csv, "output CSV path");
  sw->add_option("--gnuplot", sw_gnuplot, "write SNR-vs-rate points for gnuplot");
  add_ahp_flags(sw, sw_ahp);
  sw->add_flag("--store-measured", sw_measured, "measured-threshold encoding");
  sw->add_flag("--allow-large-window", sw_allow_large, "permit windows above 2000");
  sw->add_option("--seed", sw_seed, "seed for synthetic snippets");
  sw->add_option("--fs", sw_fs, "sample rate for synthetic snippets");
  sw->add_option("--seconds", sw_seconds, "length of synthetic snippets");

  // synth
  auto* sy = app.add_subcommand("synth", "generate in-span test signals");
  std::string sy_out = "synth.wav", sy_bank = "erb:16", sy_corpus;
  double sy_fs = 16000.0, sy_seconds = 1.0;
  int sy_components = 40, sy_count = 10;
  std::uint64_t sy_seed = 1;
  sy->add_option("--out", sy_out, "output wav");
  sy->add_option("--bank", sy_bank, "bank spec file or erb:<m>");
  sy->add_option("--fs", sy_fs, "sample rate");
  sy->add_option("--seconds", sy_seconds, "signal length");
  sy->add_option("--components", sy_components, "kernel components per snippet");
  sy->add_option("--seed", sy_seed, "rng seed");
  sy->add_option("--corpus", sy_corpus, "write a snippet corpus to this directory");
  sy->add_option("--count", sy_count, "corpus snippet count");

  // validate
  auto* va = app.add_subcommand("validate", "run the mathematical property checks");
  std::uint64_t va_seed = 1;
  std::string va_only;
  va->add_option("--seed", va_seed, "rng seed");
  va->add_option("--only", va_only, "run only checks whose name contains this");

  // bench
  auto* be = app.add_subcommand("bench", "time encode and windowed decode");
  std::string be_lengths = "0.5,1,2";
  int be_window = 100, be_repeat = 3;
  std::uint64_t be_seed = 1;
  double be_fs = 8000.0;
  be->add_option("--lengths", be_lengths, "signal lengths in seconds");
  be->add_option("--window", be_window, "window size");
  be->add_option("--repeat", be_repeat, "runs per length");
  be->add_option("--seed", be_seed, "rng seed");
  be->add_option("--fs", be_fs, "sample rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage errors
  }

  try {
    if (enc->parsed())
      return cmd_encode(enc_wav, enc_out, enc_bank, enc_ahp, enc_measured);
    if (dec->parsed())
      return cmd_decode(dec_spk, dec_out, dec_bank, dec_window, dec_batch,
                        dec_allow_large, dec_ref, dec_trace);
    if (ev->parsed()) return cmd_evaluate(ev_ref, ev_spk, ev_rec);
    if (sw->parsed())
      return cmd_sweep(sw_input, sw_bank, sw_deltas, sw_window, sw_coeff,
                       sw_allow_large, sw_csv, sw_gnuplot, sw_ahp, sw_measured,
                       sw_seed, sw_fs, sw_seconds);
    if (sy->parsed())
      return cmd_synth(sy_out, sy_bank, sy_fs, sy_seconds, sy_components,
                       sy_seed, sy_corpus, sy_count);
    if (va->parsed()) return cmd_validate(va_seed, va_only);
    if (be->parsed())
      return cmd_bench(be_lengths, be_window, be_repeat, be_seed, be_fs);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const CompatError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
