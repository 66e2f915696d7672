#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace npad {

// Synthetic feature-map dataset: each channel is a fixed sinusoidal mean
// pattern plus smooth spatial Gaussian noise (half shared across channels,
// half per channel, unit variance), rendered at image resolution and sampled
// once per feature cell. Anomalous test maps get a rectangular patch whose
// channels are shifted by +/- amplitude noise standard deviations.
struct SynthConfig {
  std::size_t n_train = 50;
  std::size_t n_test_nominal = 20;
  std::size_t n_test_anomalous = 20;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 8;
  std::size_t image_scale = 4;  // image pixels per feature pixel (mask resolution)
  double amplitude = 3.0;
  int jitter = 0;               // global misalignment in feature pixels, per image
  double smoothness = 0.5;      // noise correlation length in feature pixels
  double frequency = 0.15;      // max mean-pattern frequency, cycles per feature pixel
  std::size_t patch_min = 3;
  std::size_t patch_max = 5;
  int shift_r = -1;             // >= 0: also emit shifted test variants
  std::uint64_t seed = 7;

  static SynthConfig from_json(const std::string& text);
  std::string to_json() const;
};

// Writes train/, test/, masks/ tensors plus train.json and test.json.
void generate_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace npad
