#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <vector>

#include "error.hpp"
#include "inference.hpp"
#include "json.hpp"
#include "random.hpp"
#include "tensor_store.hpp"

namespace npad {

namespace fs = std::filesystem;
using nlohmann::json;

SynthConfig SynthConfig::from_json(const std::string& text) {
  SynthConfig c;
  if (text.empty()) return c;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("synth config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(ErrorCode::Config, "synth config must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "n_train") c.n_train = value.get<std::size_t>();
      else if (key == "n_test_nominal") c.n_test_nominal = value.get<std::size_t>();
      else if (key == "n_test_anomalous") c.n_test_anomalous = value.get<std::size_t>();
      else if (key == "height") c.height = value.get<std::size_t>();
      else if (key == "width") c.width = value.get<std::size_t>();
      else if (key == "channels") c.channels = value.get<std::size_t>();
      else if (key == "image_scale") c.image_scale = value.get<std::size_t>();
      else if (key == "amplitude") c.amplitude = value.get<double>();
      else if (key == "jitter") c.jitter = value.get<int>();
      else if (key == "smoothness") c.smoothness = value.get<double>();
      else if (key == "frequency") c.frequency = value.get<double>();
      else if (key == "patch_min") c.patch_min = value.get<std::size_t>();
      else if (key == "patch_max") c.patch_max = value.get<std::size_t>();
      else if (key == "shift_r") c.shift_r = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else fail(ErrorCode::Config, "unknown synth key '" + key + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("synth config: ") + e.what());
  }
  require(c.n_train >= 1 && c.height >= 1 && c.width >= 1 && c.channels >= 1 &&
              c.image_scale >= 1,
          ErrorCode::Config, "synth sizes must be positive");
  require(c.jitter >= 0 && c.smoothness > 0.0 && c.frequency >= 0.0, ErrorCode::Config,
          "jitter and frequency must be >= 0 and smoothness > 0");
  require(c.patch_min >= 1 && c.patch_min <= c.patch_max && c.patch_max <= c.height &&
              c.patch_max <= c.width,
          ErrorCode::Config, "patch size range must fit the feature grid");
  return c;
}

std::string SynthConfig::to_json() const {
  return json{{"n_train", n_train},
              {"n_test_nominal", n_test_nominal},
              {"n_test_anomalous", n_test_anomalous},
              {"height", height},
              {"width", width},
              {"channels", channels},
              {"image_scale", image_scale},
              {"amplitude", amplitude},
              {"jitter", jitter},
              {"smoothness", smoothness},
              {"frequency", frequency},
              {"patch_min", patch_min},
              {"patch_max", patch_max},
              {"shift_r", shift_r},
              {"seed", seed}}
      .dump();
}

namespace {

struct ChannelPattern {
  double freq_h, freq_w, phase, amp;
};

// Unit-variance smooth noise on a canvas, blurred with a Gaussian kernel.
std::vector<double> smooth_noise(Rng& rng, std::size_t rows, std::size_t cols, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum_sq = 0.0, total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) {
    k /= total;
    sum_sq += k * k;
  }
  const std::size_t pr = rows + 2 * radius, pc = cols + 2 * radius;
  std::vector<double> white(pr * pc);
  for (auto& v : white) v = standard_normal(rng);
  std::vector<double> tmp(pr * cols, 0.0), out(rows * cols, 0.0);
  for (std::size_t r = 0; r < pr; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (int i = 0; i <= 2 * radius; ++i) tmp[r * cols + c] += kernel[i] * white[r * pc + c + i];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (int i = 0; i <= 2 * radius; ++i) out[r * cols + c] += kernel[i] * tmp[(r + i) * cols + c];
  // The separable kernel's 2D energy is sum_sq^2.
  for (auto& v : out) v /= sum_sq;
  return out;
}

}  // namespace

void generate_synthetic(const SynthConfig& cfg, const fs::path& out_dir) {
  Rng rng(cfg.seed);
  const std::size_t H = cfg.height, W = cfg.width, C = cfg.channels;
  const auto s = static_cast<long long>(cfg.image_scale);
  const double two_pi = 6.283185307179586;

  // Frequencies in cycles per feature pixel.
  std::vector<ChannelPattern> patterns(C);
  for (auto& p : patterns) {
    const double f = cfg.frequency * (0.5 + 0.5 * uniform01(rng));
    const double angle = two_pi * uniform01(rng);
    p.freq_h = f * std::cos(angle);
    p.freq_w = f * std::sin(angle);
    p.phase = two_pi * uniform01(rng);
    p.amp = 1.0 + uniform01(rng);
  }

  // Every field lives on an image-resolution canvas; a feature pixel samples
  // the canvas at the centre of its stride cell. The border leaves room for
  // the jitter (feature pixels) and the shift variants (image pixels).
  const long long pad = std::max(cfg.shift_r, 0) / 2;
  const long long border = static_cast<long long>(cfg.jitter) * s + pad;
  const auto rows = static_cast<std::size_t>(static_cast<long long>(H) * s + 2 * border);
  const auto cols = static_cast<std::size_t>(static_cast<long long>(W) * s + 2 * border);
  const double sigma = cfg.smoothness * static_cast<double>(s);
  const double shared = std::sqrt(0.5);

  struct Fields {
    std::vector<double> common;
    std::vector<std::vector<double>> own;
  };
  auto make_fields = [&] {
    Fields f;
    f.common = smooth_noise(rng, rows, cols, sigma);
    for (std::size_t c = 0; c < C; ++c) f.own.push_back(smooth_noise(rng, rows, cols, sigma));
    return f;
  };
  // Feature map observed with the content displaced by (ja, jb) feature
  // pixels and the sampling grid moved by (a, b) image pixels.
  auto sample = [&](const Fields& f, int ja, int jb, int a, int b) {
    FeatureMap fm(H, W, C);
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) {
        const long long y = static_cast<long long>(h) * s + s / 2 + a + border + ja * s;
        const long long x = static_cast<long long>(w) * s + s / 2 + b + border + jb * s;
        const double fy = static_cast<double>(y - border) / static_cast<double>(s);
        const double fx = static_cast<double>(x - border) / static_cast<double>(s);
        const std::size_t at = static_cast<std::size_t>(y) * cols + static_cast<std::size_t>(x);
        auto v = fm.at(h, w);
        for (std::size_t c = 0; c < C; ++c) {
          const auto& p = patterns[c];
          const double mean = p.amp * std::sin(two_pi * (p.freq_h * fy + p.freq_w * fx) + p.phase);
          v[c] = mean + shared * f.common[at] + shared * f.own[c][at];
        }
      }
    return fm;
  };
  auto jitter = [&] {
    if (cfg.jitter == 0) return std::pair<int, int>{0, 0};
    const auto span = static_cast<std::uint64_t>(2 * cfg.jitter + 1);
    return std::pair<int, int>{static_cast<int>(uniform_index(rng, span)) - cfg.jitter,
                               static_cast<int>(uniform_index(rng, span)) - cfg.jitter};
  };

  std::error_code ec;
  fs::create_directories(out_dir / "train", ec);
  fs::create_directories(out_dir / "test", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec) fail(ErrorCode::Io, "cannot create '" + out_dir.string() + "'");

  DatasetManifest train;
  train.feature_h = H;
  train.feature_w = W;
  train.image_h = H * cfg.image_scale;
  train.image_w = W * cfg.image_scale;
  DatasetManifest test = train;

  char name[64];
  for (std::size_t i = 0; i < cfg.n_train; ++i) {
    const auto [ja, jb] = jitter();
    std::snprintf(name, sizeof name, "train_%03zu", i);
    const fs::path path = out_dir / "train" / (std::string(name) + ".npad");
    write_tensor(path, to_tensor(sample(make_fields(), ja, jb, 0, 0)));
    train.entries.push_back({name, path, Role::Train, std::nullopt, std::nullopt, std::nullopt});
  }

  const std::size_t n_test = cfg.n_test_nominal + cfg.n_test_anomalous;
  for (std::size_t i = 0; i < n_test; ++i) {
    const bool anomalous = i >= cfg.n_test_nominal;
    const auto [ja, jb] = jitter();
    const auto fields = make_fields();
    std::snprintf(name, sizeof name, "test_%03zu", i);

    // The defect is a rectangle in the observed image frame, in whole
    // feature cells; every channel moves by +/- amplitude inside it.
    std::size_t top = 0, left = 0, span_h = 0, span_w = 0;
    std::vector<double> sign(C, 0.0);
    std::optional<fs::path> mask_path;
    if (anomalous) {
      span_h = cfg.patch_min + uniform_index(rng, cfg.patch_max - cfg.patch_min + 1);
      span_w = cfg.patch_min + uniform_index(rng, cfg.patch_max - cfg.patch_min + 1);
      top = uniform_index(rng, H - span_h + 1) * cfg.image_scale;
      left = uniform_index(rng, W - span_w + 1) * cfg.image_scale;
      span_h *= cfg.image_scale;
      span_w *= cfg.image_scale;
      for (auto& v : sign) v = (rng() & 1) ? 1.0 : -1.0;
      std::vector<std::uint8_t> mask(train.image_h * train.image_w, 0);
      for (std::size_t y = top; y < top + span_h; ++y)
        for (std::size_t x = left; x < left + span_w; ++x) mask[y * train.image_w + x] = 1;
      mask_path = out_dir / "masks" / (std::string(name) + ".npad");
      write_tensor(*mask_path, Tensor({static_cast<std::uint32_t>(train.image_h),
                                       static_cast<std::uint32_t>(train.image_w)},
                                      std::move(mask)));
    }
    auto observe = [&](int a, int b) {
      auto fm = sample(fields, ja, jb, a, b);
      if (!anomalous) return fm;
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          const long long y = static_cast<long long>(h) * s + s / 2 + a;
          const long long x = static_cast<long long>(w) * s + s / 2 + b;
          if (y < static_cast<long long>(top) || y >= static_cast<long long>(top + span_h) ||
              x < static_cast<long long>(left) || x >= static_cast<long long>(left + span_w))
            continue;
          auto v = fm.at(h, w);
          for (std::size_t c = 0; c < C; ++c) v[c] += cfg.amplitude * sign[c];
        }
      return fm;
    };

    const int label = anomalous ? 1 : 0;
    if (cfg.shift_r < 0) {
      const fs::path path = out_dir / "test" / (std::string(name) + ".npad");
      write_tensor(path, to_tensor(observe(0, 0)));
      test.entries.push_back({name, path, Role::Test, label, mask_path, std::nullopt});
      continue;
    }
    // Shift variants resample the same image with the grid moved by (a, b)
    // image pixels, like re-extracting from a shifted crop window.
    for (const auto& off : shift_offsets(cfg.shift_r)) {
      char variant[96];
      std::snprintf(variant, sizeof variant, "%s_s%+d%+d", name, off.a, off.b);
      const fs::path path = out_dir / "test" / (std::string(variant) + ".npad");
      write_tensor(path, to_tensor(observe(off.a, off.b)));
      test.entries.push_back({name, path, Role::Test, label, mask_path, off});
    }
  }

  save_manifest(out_dir / "train.json", train);
  save_manifest(out_dir / "test.json", test);
  std::ofstream meta(out_dir / "synth.json", std::ios::trunc);
  meta << json::parse(cfg.to_json()).dump(2) << '\n';
}

}  // namespace npad
