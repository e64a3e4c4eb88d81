#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sepkit/feature_io.hpp"
#include "sepkit/features.hpp"
#include "test_support.hpp"

namespace sepkit {
namespace {

using testing::TempDir;

AudioClip MakeClip(std::vector<float> samples) {
  AudioClip c;
  c.buffer.samples = std::move(samples);
  c.source_id = "t";
  return c;
}

std::vector<float> Tone(double hz, double amp, size_t n = 48000) {
  std::vector<float> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = static_cast<float>(amp * std::sin(2 * M_PI * hz * i / 16000.0));
  return x;
}

std::vector<float> Noise(uint64_t seed, double amp, size_t n = 48000) {
  Rng r(seed);
  std::vector<float> x(n);
  for (auto &v : x) v = static_cast<float>(amp * r.Uniform(-1.0, 1.0));
  return x;
}

std::vector<float> PulseTrain(int period, size_t n = 48000) {
  std::vector<float> x(n, 0.0f);
  for (size_t i = 0; i < n; i += period) x[i] = 0.9f;
  return x;
}

// ---------------------------------------------------------------------------
// mel_filterbank

TEST(MelFilterbank, ThreeSecondClipHas298Frames) {
  const auto s = MelFilterbank(MakeClip(Noise(1, 0.1)));
  EXPECT_EQ(s.name, StreamName::kMfb);
  EXPECT_EQ(s.frames, 298u);
  EXPECT_EQ(s.dims, 40u);
  EXPECT_EQ(s.data.size(), 298u * 40u);
  EXPECT_EQ(NumFrames(48000), (48000u - 400u) / 160u + 1u);
  EXPECT_EQ(NumFrames(399), 0u);
}

TEST(MelFilterbank, SilenceIsLogFloor) {
  const auto s = MelFilterbank(MakeClip(std::vector<float>(48000, 0.0f)));
  const float floor = static_cast<float>(std::log(1e-10));
  for (float v : s.data) ASSERT_EQ(v, floor);
}

// Oracle: band centers are equally spaced on the HTK mel scale between 0 and
// 8000 Hz; recompute them here and pick the one nearest 1 kHz.
TEST(MelFilterbank, ThousandHertzToneLandsInNearestBand) {
  const double mel_hi = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  size_t want = 0;
  double best = 1e9;
  for (size_t b = 0; b < 40; ++b) {
    const double mel = mel_hi * static_cast<double>(b + 1) / 41.0;
    const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    if (std::abs(hz - 1000.0) < best) best = std::abs(hz - 1000.0), want = b;
  }
  const auto s = MelFilterbank(MakeClip(Tone(1000.0, 0.5)));
  for (size_t t = 0; t < s.frames; ++t) {
    const auto row = s.row(t);
    const size_t arg = static_cast<size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    ASSERT_EQ(arg, want) << "frame " << t;
  }
}

// Property: doubling the amplitude quadruples every band energy.
TEST(MelFilterbank, AmplitudeScalingShiftsByLogFour) {
  const auto x = Noise(2, 0.1);
  std::vector<float> x2(x.size());
  std::transform(x.begin(), x.end(), x2.begin(), [](float v) { return 2.0f * v; });
  const auto a = LogMelEnergies(x), b = LogMelEnergies(x2);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(b[i] - a[i], std::log(4.0), 1e-6);
}

TEST(MelFilterbank, FiltersArePositiveAndIncreasing) {
  const MelBanks banks(MfbConfig{});
  ASSERT_EQ(banks.size(), 40u);
  for (size_t b = 0; b < banks.size(); ++b) {
    double sum = 0;
    for (double w : banks.filter(b)) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_GT(sum, 0.0) << "band " << b;
    if (b > 0) {
      EXPECT_GT(HzToMel(banks.center_hz(b)), HzToMel(banks.center_hz(b - 1)));
    }
  }
  EXPECT_NEAR(MelToHz(HzToMel(1234.5)), 1234.5, 1e-9);
}

TEST(MelFilterbank, RejectsWrongRate) {
  AudioClip c = MakeClip(Noise(3, 0.1));
  c.buffer.sample_rate = 8000;
  EXPECT_THROW(MelFilterbank(c), Error);
}

// ---------------------------------------------------------------------------
// pitch_features

TEST(PitchFeatures, SilenceIsUnvoiced) {
  const auto s = PitchFeatures(MakeClip(std::vector<float>(48000, 0.0f)));
  EXPECT_EQ(s.frames, 298u);
  EXPECT_EQ(s.dims, 3u);
  for (float v : s.data) ASSERT_EQ(v, 0.0f);
}

// Oracle: a pulse every 160 samples at 16 kHz is periodic at exactly 100 Hz.
TEST(PitchFeatures, PulseTrainAtLag160Is100Hz) {
  const auto s = PitchFeatures(MakeClip(PulseTrain(160)));
  std::vector<float> f0;
  for (size_t t = 0; t < s.frames; ++t) f0.push_back(s.at(t, 0));
  std::nth_element(f0.begin(), f0.begin() + f0.size() / 2, f0.end());
  EXPECT_NEAR(f0[f0.size() / 2], 100.0, 2.0);
  for (size_t t = 2; t + 2 < s.frames; ++t) EXPECT_GE(s.at(t, 2), 0.8f) << "frame " << t;
}

TEST(PitchFeatures, TracksSeveralPitches) {
  for (double hz : {80.0, 150.0, 220.0, 350.0}) {
    const auto s = PitchFeatures(MakeClip(Tone(hz, 0.5)));
    for (size_t t = 1; t + 1 < s.frames; ++t) ASSERT_NEAR(s.at(t, 0), hz, 0.02 * hz) << hz << " Hz, frame " << t;
  }
}

TEST(PitchFeatures, SteadyToneHasZeroDelta) {
  const auto s = PitchFeatures(MakeClip(Tone(200.0, 0.5)));
  EXPECT_EQ(s.at(0, 1), 0.0f);
  for (size_t t = 2; t + 2 < s.frames; ++t) EXPECT_NEAR(s.at(t, 1), 0.0f, 0.05f);
}

// Property: the delta column telescopes exactly.
TEST(PitchFeatures, DeltasTelescope) {
  Rng r(8);
  for (int trial = 0; trial < 5; ++trial) {
    // Glide with noisy voiced/unvoiced stretches.
    std::vector<float> x(48000);
    double phase = 0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double hz = 90 + 200 * i / 48000.0;
      phase += 2 * M_PI * hz / 16000.0;
      const bool voiced = (i / 4000) % 3 != 2;
      x[i] = static_cast<float>(voiced ? 0.4 * std::sin(phase) : 0.05 * r.Uniform(-1, 1));
    }
    const auto s = PitchFeatures(MakeClip(x));
    float sum = 0.0f;
    for (size_t t = 0; t < s.frames; ++t) sum += s.at(t, 1);
    EXPECT_EQ(sum, s.at(s.frames - 1, 0) - s.at(0, 0));
  }
}

TEST(PitchFeatures, VoicingStaysInUnitInterval) {
  const auto s = PitchFeatures(MakeClip(Noise(4, 0.3)));
  for (size_t t = 0; t < s.frames; ++t) {
    EXPECT_GE(s.at(t, 2), 0.0f);
    EXPECT_LE(s.at(t, 2), 1.0f);
    if (s.at(t, 0) != 0.0f) {
      EXPECT_GE(s.at(t, 0), 60.0f * 0.95f);
      EXPECT_LE(s.at(t, 0), 400.0f * 1.05f);
    }
  }
}

// Property: identical clip bytes give identical feature bytes.
TEST(Features, ExtractionIsDeterministic) {
  TempDir dir;
  const auto clip = MakeClip(Noise(5, 0.2));
  for (int k = 0; k < 2; ++k) {
    WriteFeatureFile(dir / ("m" + std::to_string(k)), MelFilterbank(clip));
    WriteFeatureFile(dir / ("p" + std::to_string(k)), PitchFeatures(clip));
  }
  EXPECT_EQ(ReadTextFile(dir / "m0"), ReadTextFile(dir / "m1"));
  EXPECT_EQ(ReadTextFile(dir / "p0"), ReadTextFile(dir / "p1"));
}

// ---------------------------------------------------------------------------
// Frame-feature file format and external streams

FeatureStream Ramp(StreamName name, size_t frames, size_t dims, double rate = 100.0) {
  FeatureStream s;
  s.name = name;
  s.frames = frames;
  s.dims = dims;
  s.frame_rate = rate;
  s.data.resize(frames * dims);
  for (size_t i = 0; i < s.data.size(); ++i) s.data[i] = static_cast<float>(i) * 0.5f;
  return s;
}

TEST(FeatureFile, HeaderLayoutIsBitExact) {
  std::ostringstream os;
  WriteFeatureStream(os, Ramp(StreamName::kAtv, 2, 8, 100.0));
  const std::string b = os.str();
  ASSERT_EQ(b.size(), 4u + 2 + 2 + 4 + 4 + 4 + 2 * 8 * 4);
  EXPECT_EQ(b.substr(0, 4), "SEPF");
  auto u16 = [&](size_t o) { return static_cast<uint16_t>(uint8_t(b[o]) | uint8_t(b[o + 1]) << 8); };
  auto u32 = [&](size_t o) {
    uint32_t v;
    std::memcpy(&v, b.data() + o, 4);
    return v;
  };
  EXPECT_EQ(u16(4), 1);  // version
  EXPECT_EQ(u16(6), 2);  // ATV
  EXPECT_EQ(u32(8), 8u);
  EXPECT_EQ(u32(12), 2u);
  float rate, v3;
  std::memcpy(&rate, b.data() + 16, 4);
  std::memcpy(&v3, b.data() + 20 + 3 * 4, 4);
  EXPECT_EQ(rate, 100.0f);
  EXPECT_EQ(v3, 1.5f);
}

TEST(FeatureFile, RoundTripsAndRejectsCorruption) {
  TempDir dir;
  const auto s = Ramp(StreamName::kMfb, 5, 40);
  WriteFeatureFile(dir / "a.sepf", s);
  const auto r = ReadFeatureFile(dir / "a.sepf");
  EXPECT_EQ(r.name, s.name);
  EXPECT_EQ(r.frames, 5u);
  EXPECT_EQ(r.data, s.data);

  std::string bytes = ReadTextFile(dir / "a.sepf");
  std::string bad = bytes;
  bad[0] = 'X';
  WriteTextFile(dir / "magic.sepf", bad);
  EXPECT_THROW(ReadFeatureFile(dir / "magic.sepf"), InputError);
  bad = bytes;
  bad[4] = 2;
  WriteTextFile(dir / "version.sepf", bad);
  EXPECT_THROW(ReadFeatureFile(dir / "version.sepf"), InputError);
  WriteTextFile(dir / "short.sepf", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(ReadFeatureFile(dir / "short.sepf"), InputError);
  auto nan = s;
  nan.data[7] = std::nanf("");
  WriteFeatureFile(dir / "nan.sepf", nan);
  EXPECT_THROW(ReadFeatureFile(dir / "nan.sepf"), InputError);
}

TEST(ExternalStream, LoadsPhoneIdentity) {
  TempDir dir;
  WriteFeatureFile(dir / "p.sepf", Ramp(StreamName::kPhone, 298, 41));
  const auto s = LoadExternalStream(dir / "p.sepf", StreamName::kPhone);
  EXPECT_EQ(s.frames, 298u);
  EXPECT_EQ(s.dims, 41u);
}

TEST(ExternalStream, RejectsDimensionMismatch) {
  TempDir dir;
  WriteFeatureFile(dir / "p.sepf", Ramp(StreamName::kPhone, 298, 8));
  try {
    LoadExternalStream(dir / "p.sepf", StreamName::kPhone);
    FAIL() << "expected an error";
  } catch (const InputError &e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos) << e.what();
  }
  WriteFeatureFile(dir / "a.sepf", Ramp(StreamName::kAtv, 298, 8));
  EXPECT_THROW(LoadExternalStream(dir / "a.sepf", StreamName::kPhone), InputError);
}

// Oracle: output frame i copies input frame round(i/2), clamped to the last.
TEST(ExternalStream, UpsamplesFiftyHertzByNearestFrame) {
  TempDir dir;
  const auto in = Ramp(StreamName::kAtv, 149, 8, 50.0);
  WriteFeatureFile(dir / "a.sepf", in);
  const auto s = LoadExternalStream(dir / "a.sepf", StreamName::kAtv);
  ASSERT_EQ(s.frames, 298u);
  EXPECT_EQ(s.frame_rate, 100.0);
  for (size_t i = 0; i < 298; ++i) {
    const size_t src = std::min<size_t>(static_cast<size_t>(std::floor(i / 2.0 + 0.5)), 148);
    for (size_t d = 0; d < 8; ++d) ASSERT_EQ(s.at(i, d), in.at(src, d)) << "frame " << i;
  }
}

// ---------------------------------------------------------------------------
// bundle

TEST(Bundle, ConcatenatesWithoutTruncation) {
  const auto b = Bundle({FeatureStream::Zeros(StreamName::kF0, 298), FeatureStream::Zeros(StreamName::kMfb, 298)});
  EXPECT_EQ(b.frames(), 298u);
  EXPECT_EQ(b.total_dims(), 43u);
  EXPECT_EQ(b.names(), (std::vector<StreamName>{StreamName::kMfb, StreamName::kF0}));
}

TEST(Bundle, TruncatesToShortestStream) {
  const auto b = Bundle({FeatureStream::Zeros(StreamName::kMfb, 298), FeatureStream::Zeros(StreamName::kPhone, 297)});
  EXPECT_EQ(b.frames(), 297u);
  for (const auto &s : b.streams) {
    EXPECT_EQ(s.frames, 297u);
    EXPECT_EQ(s.data.size(), 297u * s.dims);
  }
}

TEST(Bundle, SingleStreamAndDuplicates) {
  EXPECT_EQ(Bundle({FeatureStream::Zeros(StreamName::kAtv, 10)}).streams.size(), 1u);
  EXPECT_THROW(Bundle({FeatureStream::Zeros(StreamName::kMfb, 10), FeatureStream::Zeros(StreamName::kMfb, 10)}),
               Error);
  EXPECT_THROW(Bundle({}), Error);
}

TEST(Streams, NamesParseAndCarryDimensions) {
  for (StreamName n : kAllStreams) EXPECT_EQ(ParseStreamName(StreamLabel(n)), n);
  EXPECT_EQ(StreamDims(StreamName::kMfb), 40u);
  EXPECT_EQ(StreamDims(StreamName::kF0), 3u);
  EXPECT_EQ(StreamDims(StreamName::kAtv), 8u);
  EXPECT_EQ(StreamDims(StreamName::kPhone), 41u);
  EXPECT_THROW(ParseStreamName("mfcc"), InputError);
}

}  // namespace
}  // namespace sepkit
