#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "spikecodec/decode_batch.hpp"
#include "spikecodec/metrics.hpp"
#include "spikecodec/sigio.hpp"
#include "test_support.hpp"

using namespace spikecodec;

namespace {

// Random in-span spec with well-separated same-kernel components.
SynthSpec random_span_spec(SplitMix64& rng, const KernelBank& bank,
                           int max_components, std::int64_t length) {
  SynthSpec spec;
  spec.length = length;
  const int n =
      1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_components)));
  std::set<std::pair<int, std::int64_t>> used;
  for (int i = 0; i < n; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const int kid = static_cast<int>(rng.next_below(bank.size()));
      const std::int64_t lo = bank.at(kid).support_len();
      const std::int64_t t =
          lo + static_cast<std::int64_t>(rng.next_below(
                   static_cast<std::uint64_t>(length - lo)));
      bool clash = false;
      for (const auto& [k2, t2] : used)
        if (k2 == kid && std::llabs(t2 - t) < bank.at(kid).support_len() / 8)
          clash = true;
      if (clash) continue;
      used.insert({kid, t});
      const double mag = rng.uniform(0.1, 1.0);
      spec.components.push_back({kid, t, rng.next_below(2) ? mag : -mag});
      break;
    }
  }
  return spec;
}

}  // namespace

TEST_CASE("solve_coefficients: identity Gram returns the thresholds") {
  GramSystem sys;
  sys.P = Eigen::MatrixXd::Identity(4, 4);
  sys.T = Eigen::VectorXd::LinSpaced(4, 1.0, 4.0);
  SolverReport rep;
  const Eigen::VectorXd alpha = solve_coefficients(sys, &rep);
  for (int i = 0; i < 4; ++i) CHECK(alpha(i) == doctest::Approx(sys.T(i)));
  CHECK(rep.method == SolverReport::Method::cholesky);
  CHECK(rep.rank == 4);
}

TEST_CASE("solve_coefficients: construct-then-solve on random SPD systems") {
  SplitMix64 rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(9));
    Eigen::MatrixXd B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = rng.uniform(-1.0, 1.0);
    GramSystem sys;
    sys.P = B * B.transpose() + 0.2 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd alpha0(n);
    for (int i = 0; i < n; ++i) alpha0(i) = rng.uniform(-2.0, 2.0);
    sys.T = sys.P * alpha0;
    const Eigen::VectorXd alpha = solve_coefficients(sys);
    CHECK((alpha - alpha0).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("solve_coefficients: empty system and non-finite thresholds") {
  GramSystem sys;
  sys.P = Eigen::MatrixXd(0, 0);
  sys.T = Eigen::VectorXd(0);
  CHECK(solve_coefficients(sys).size() == 0);

  sys.P = Eigen::MatrixXd::Identity(2, 2);
  sys.T = Eigen::VectorXd(2);
  sys.T << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(solve_coefficients(sys), InputError);
}

TEST_CASE("assemble enforces the batch spike cap") {
  const KernelBank bank = make_erb_bank(2, 8000.0);
  const CorrTable table = cross_corr_table(bank);
  SpikeTrain t;
  t.fs = bank.fs;
  t.bank_hash = bank.bank_hash;
  t.signal_len = 10;
  t.spikes.resize(static_cast<std::size_t>(kBatchSpikeCap) + 1,
                  Spike{0, 0, 1.0});
  CHECK_THROWS_AS(assemble(t, table), ConfigError);
}

TEST_CASE("reconstruct: empty train and single unit spike") {
  const KernelBank bank = make_erb_bank(3, 8000.0);
  SpikeTrain empty;
  empty.fs = bank.fs;
  empty.bank_hash = bank.bank_hash;
  empty.signal_len = 100;
  const Samples zero = reconstruct(empty, Eigen::VectorXd(0), bank, 100);
  for (double v : zero) CHECK(v == 0.0);

  SpikeTrain one = empty;
  const Kernel& k = bank.kernels[2];
  const std::int64_t t0 = 400;
  one.spikes.push_back({2, t0, 1.0});
  one.signal_len = 600;
  Eigen::VectorXd alpha(1);
  alpha << 1.0;
  const Samples rec = reconstruct(one, alpha, bank, 600);
  for (std::int64_t t = 0; t < 600; ++t) {
    const std::int64_t u = t0 - t;
    const double expect =
        (u >= 0 && u < k.support_len()) ? k.samples[static_cast<std::size_t>(u)]
                                        : 0.0;
    CHECK(rec[static_cast<std::size_t>(t)] == doctest::Approx(expect));
  }
}

TEST_CASE("duplicate spikes: minimum-norm solve reproduces the dedup signal") {
  SplitMix64 rng(77);
  const KernelBank bank = make_erb_bank(4, 8000.0);
  const CorrTable table = cross_corr_table(bank);
  const SynthSpec spec = random_span_spec(rng, bank, 12, 6000);
  const SynthResult synth = synth_in_span(spec, bank);
  const SpikeTrain train = forced_train(spec, bank, synth);

  SpikeTrain dup = train;
  dup.spikes.push_back(dup.spikes.back());  // exact duplicate
  std::sort(dup.spikes.begin(), dup.spikes.end(), spike_order);

  const Reconstruction base = decode(train, bank, table);
  const Reconstruction with_dup = decode(dup, bank, table);
  CHECK(with_dup.report.method == SolverReport::Method::svd);
  CHECK(testsup::l2_diff(base.samples, with_dup.samples) <
        1e-8 * (1.0 + testsup::l2_norm(base.samples)));
}

TEST_CASE("in-span signals with forced thresholds decode above 80 dB") {
  SplitMix64 rng(4242);
  const KernelBank bank = make_erb_bank(10, 8000.0);
  const CorrTable table = cross_corr_table(bank);
  for (int trial = 0; trial < 5; ++trial) {
    const SynthSpec spec = random_span_spec(rng, bank, 40, 9600);
    const SynthResult synth = synth_in_span(spec, bank);
    const SpikeTrain train = forced_train(spec, bank, synth);
    const Reconstruction rec = decode(train, bank, table);
    CHECK(snr_db(synth.samples, rec.samples) >= 80.0);
  }
}

TEST_CASE("decode of an encoded zero signal is zero") {
  const KernelBank bank = make_erb_bank(3, 8000.0);
  const CorrTable table = cross_corr_table(bank);
  const Samples zeros(2000, 0.0);
  const SpikeTrain train = encode(zeros, bank, {1e-4, 0.7, 0.01});
  const Reconstruction rec = decode(train, bank, table);
  REQUIRE(rec.samples.size() == zeros.size());
  for (double v : rec.samples) CHECK(v == 0.0);
}

TEST_CASE("dense encoding of an in-span signal reaches 20 dB") {
  SplitMix64 rng(99);
  const double fs = 8000.0;
  std::vector<GammatoneParams> gt;
  for (double f : erb_spaced_frequencies(14, 60.0, 2400.0))
    gt.push_back({f, 4, 0.0, 0.0});
  const KernelBank bank = build_bank(gt, fs);
  const CorrTable table = cross_corr_table(bank);
  SynthSpec spec = random_span_spec(rng, bank, 30, 4800);
  SynthResult synth = synth_in_span(spec, bank);
  // Normalize to peak 1 for the encoder contract.
  const double peak = input_peak(synth.samples);
  REQUIRE(peak > 0.0);
  for (double& v : synth.samples) v /= peak;
  double conv_peak = 0.0;
  for (const Kernel& k : bank.kernels)
    conv_peak = std::max(conv_peak, input_peak(convolve(synth.samples, k)));

  // Dense regime, measured thresholds: the recorded values are the exact
  // crossing inner products, so decode fidelity is limited only by how much
  // of the signal the spike set spans.
  const ThresholdParams p{0.02 * conv_peak, 2.5 * conv_peak, 0.001};
  const SpikeTrain train = encode(synth.samples, bank, p, true);
  REQUIRE(train.size() > 500);
  const Reconstruction rec = decode(train, bank, table);
  const double snr = snr_db(synth.samples, rec.samples);
  MESSAGE("dense in-span SNR: ", snr, " dB with N = ", train.size());
  CHECK(snr >= 20.0);
}

TEST_CASE("constraint residual: reconstruction reproduces every threshold") {
  SplitMix64 rng(11);
  const double fs = 8000.0;
  const KernelBank bank = make_erb_bank(5, fs);
  const CorrTable table = cross_corr_table(bank);
  const Samples x = testsup::random_signal(rng, 8000, 1.0, fs);
  const SpikeTrain train = encode(x, bank, {2e-4, 0.65, 0.02});
  REQUIRE(train.size() > 5);

  const GramSystem sys = assemble(train, table);
  Reconstruction rec;
  rec.alpha = solve_coefficients(sys, &rec.report);
  REQUIRE(rec.report.method == SolverReport::Method::cholesky);
  // Materialize on a shifted time axis covering [-max_support, len +
  // max_support): early spikes have waveforms reaching before t = 0, and
  // the inner-product oracle must see their full supports. Shifting all
  // spikes leaves the Gram (hence alpha) unchanged.
  SpikeTrain shifted = train;
  for (Spike& s : shifted.spikes) s.sample_index += bank.max_support;
  const std::int64_t full_len = train.signal_len + 2 * bank.max_support;
  rec.samples = reconstruct(shifted, rec.alpha, bank, full_len);

  const auto inner = testsup::measured_thresholds(rec.samples, shifted, bank);
  for (std::size_t i = 0; i < train.size(); ++i)
    CHECK(inner[i] ==
          doctest::Approx(train.spikes[i].threshold).scale(1.0).epsilon(1e-6));
}

TEST_CASE("projection optimality against random span vectors") {
  SplitMix64 rng(123);
  const double fs = 8000.0;
  const KernelBank bank = make_erb_bank(4, fs);
  const CorrTable table = cross_corr_table(bank);
  const std::int64_t len = 6000;
  const Samples x = testsup::random_signal(rng, len, 1.0, fs);

  // Arbitrary spike placements; thresholds forced to the true inner
  // products so the decode is the orthogonal projection onto their span.
  SpikeTrain train;
  train.fs = fs;
  train.bank_hash = bank.bank_hash;
  train.signal_len = len;
  for (int i = 0; i < 10; ++i) {
    const int kid = static_cast<int>(rng.next_below(bank.size()));
    const std::int64_t lo = bank.at(kid).support_len();
    train.spikes.push_back(
        {kid, lo + static_cast<std::int64_t>(
                       rng.next_below(static_cast<std::uint64_t>(len - lo))),
         0.0});
  }
  std::sort(train.spikes.begin(), train.spikes.end(), spike_order);
  const auto forced = testsup::measured_thresholds(x, train, bank);
  for (std::size_t i = 0; i < train.size(); ++i)
    train.spikes[i].threshold = forced[i];

  const Reconstruction rec = decode(train, bank, table, len);
  const double err_star = testsup::l2_diff(x, rec.samples);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a(static_cast<Eigen::Index>(train.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.uniform(-2.0, 2.0);
    const Samples cand = reconstruct(train, a, bank, len);
    CHECK(err_star <= testsup::l2_diff(x, cand) + 1e-9);
  }
}

TEST_CASE("adding consistent spikes never worsens the reconstruction") {
  SplitMix64 rng(321);
  const double fs = 8000.0;
  const KernelBank bank = make_erb_bank(4, fs);
  const CorrTable table = cross_corr_table(bank);
  const std::int64_t len = 6000;
  const Samples x = testsup::random_signal(rng, len, 1.0, fs);

  auto place = [&](int count) {
    SpikeTrain t;
    t.fs = fs;
    t.bank_hash = bank.bank_hash;
    t.signal_len = len;
    SplitMix64 r2(777);  // same placements; supersets extend the list
    for (int i = 0; i < count; ++i) {
      const int kid = static_cast<int>(r2.next_below(bank.size()));
      const std::int64_t lo = bank.at(kid).support_len();
      t.spikes.push_back(
          {kid, lo + static_cast<std::int64_t>(
                         r2.next_below(static_cast<std::uint64_t>(len - lo))),
           0.0});
    }
    std::sort(t.spikes.begin(), t.spikes.end(), spike_order);
    const auto forced = testsup::measured_thresholds(x, t, bank);
    for (std::size_t i = 0; i < t.size(); ++i) t.spikes[i].threshold = forced[i];
    return t;
  };

  double prev_err = std::numeric_limits<double>::infinity();
  for (int count : {5, 10, 20, 40}) {
    const SpikeTrain t = place(count);
    const Reconstruction rec = decode(t, bank, table, len);
    const double err = testsup::l2_diff(x, rec.samples);
    CHECK(err <= prev_err + 1e-9);
    prev_err = err;
  }
}
