#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "aggregate_bank.hpp"
#include "channel_reduce.hpp"
#include "json.hpp"
#include "parallel.hpp"

namespace npad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (auto& ch : out)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' || ch == '_'))
      ch = '_';
  return out;
}

// The feature grid relative to the image grid, per axis.
std::pair<double, double> feature_per_image(const DatasetManifest& m) {
  return {static_cast<double>(m.feature_h) / static_cast<double>(m.image_h),
          static_cast<double>(m.feature_w) / static_cast<double>(m.image_w)};
}

// Channel-reduced feature maps for every variant of an image. Without
// manifest variants and with `feature_shift`, variants are synthesized by
// shifting the feature map by the image offset converted to feature pixels.
std::vector<std::pair<ShiftOffset, FeatureMap>> variant_features(
    const TestImage& image, const DatasetManifest& manifest, const ChannelSelection& selection,
    int r, bool feature_shift) {
  std::vector<std::pair<ShiftOffset, FeatureMap>> out;
  for (const auto& [offset, path] : image.variants)
    out.emplace_back(offset, apply_selection(read_feature_map(path), selection));
  if (out.size() == 1 && out.front().first == ShiftOffset{0, 0} && feature_shift && r > 0) {
    const auto base = std::move(out.front().second);
    const auto [sh, sw] = feature_per_image(manifest);
    out.clear();
    for (const auto& off : shift_offsets(r))
      out.emplace_back(off, shift_feature_map(base, off.a * sh, off.b * sw));
  }
  return out;
}

// Mean over variants of per-variant maps/scores, translated back to the
// unshifted frame. A single (0,0) variant passes through unchanged.
ShiftedResult aggregate_variants(std::vector<ShiftVariant> variants, int r,
                                 const DatasetManifest& manifest) {
  if (variants.size() == 1 && variants.front().offset == ShiftOffset{0, 0})
    return {std::move(variants.front().map), variants.front().score};
  const auto [sh, sw] = feature_per_image(manifest);
  return shifted_manifest_scores(variants, r, sh, sw);
}

void check_model_matches(const ModelBundle& model, const DatasetManifest& manifest) {
  if (manifest.feature_h != model.weighted.height() ||
      manifest.feature_w != model.weighted.width() ||
      manifest.channels != model.selection.source_channels) {
    const auto tests = manifest.with_role(Role::Test);
    const std::string offending = tests.empty() ? std::string("<none>") : tests.front()->tensor.string();
    fail(ErrorCode::ShapeMismatch,
         "test tensor '" + offending + "' is " + std::to_string(manifest.feature_h) + "x" +
             std::to_string(manifest.feature_w) + "x" + std::to_string(manifest.channels) +
             ", model expects " + std::to_string(model.weighted.height()) + "x" +
             std::to_string(model.weighted.width()) + "x" +
             std::to_string(model.selection.source_channels));
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

double percentile(std::vector<double> values, double fraction) {
  std::sort(values.begin(), values.end());
  const double pos = fraction * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

void write_pgm(const fs::path& path, const AnomalyMap& map, double lo, double hi) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << "P5\n" << map.width() << " " << map.height() << "\n255\n";
  const double range = hi > lo ? hi - lo : 1.0;
  for (double v : map.values()) {
    const double t = std::clamp((v - lo) / range, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
  }
}

}  // namespace

std::vector<FeatureMap> load_train_features(const DatasetManifest& manifest,
                                            const RunConfig& config) {
  auto entries = manifest.with_role(Role::Train);
  if (config.limit_train > 0 && entries.size() > config.limit_train)
    entries.resize(config.limit_train);
  require(!entries.empty(), ErrorCode::Validation, "manifest has no train entries");
  std::vector<FeatureMap> maps(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) { maps[i] = read_feature_map(entries[i]->tensor); });
  return maps;
}

FitArtifacts fit_model(std::span<const FeatureMap> train_raw, const RunConfig& config) {
  config.validate();
  check_same_shape(train_raw, "fit");
  const auto& hp = config.hp;
  const std::size_t channels = train_raw.front().channels();

  FitArtifacts out;
  auto& model = out.model;
  model.hp = hp;
  const auto counts = count_nonzero_per_channel(train_raw, config.nonzero_abs);
  model.selection = select_channels(counts, std::min(hp.d, channels));

  const std::size_t height = train_raw.front().height();
  const std::size_t width = train_raw.front().width();
  const std::size_t d = model.selection.size();
  const double projected = 3.0 * static_cast<double>(field_memory_bytes(height, width, d));
  if (projected > config.memory_budget_gb * 1024.0 * 1024.0 * 1024.0)
    std::cerr << "warning: fitting needs about " << projected / (1024.0 * 1024.0 * 1024.0)
              << " GiB for per-pixel covariances (d=" << d
              << "); memory grows with d^2, consider a smaller d\n";

  std::vector<FeatureMap> reduced;
  reduced.reserve(train_raw.size());
  for (const auto& fm : train_raw) reduced.push_back(apply_selection(fm, model.selection));

  const FitOptions options{.allow_single_sample = reduced.size() == 1};
  {
    const auto base = fit_pixel_gaussians(reduced, hp.epsilon, options);
    auto weighted = fit_weighted_field(reduced, base, hp.p, hp.gamma, hp.epsilon,
                                       {config.weighting, config.bc_form, config.seed});
    out.weights = std::move(weighted.weights);
    model.weighted = std::move(weighted.field);
  }

  std::vector<FeatureMap> aggregated;
  aggregated.reserve(reduced.size());
  for (const auto& fm : reduced) aggregated.push_back(aggregate_features(fm, hp.p));
  model.aggregate = fit_pixel_gaussians(aggregated, hp.epsilon, options);

  BankOptions bank;
  bank.ratio = hp.ratio;
  bank.seed = config.seed;
  bank.max_points = config.max_points;
  bank.medoid = config.medoid;
  model.bank = build_centroid_bank(aggregated, bank);
  return out;
}

ImageResult score_reduced(const ModelBundle& model, const CentroidIndex& index,
                          const FeatureMap& reduced, std::size_t q, std::size_t k_top) {
  ImageResult r;
  r.d1 = score_d1(reduced, model.weighted, q);
  r.d2 = score_d2(reduced, model.aggregate, model.hp.p);
  r.map = combine_maps(r.d1, r.d2);
  r.score = image_score(r.d1, aggregate_features(reduced, model.hp.p), index, k_top);
  return r;
}

std::vector<TestImage> group_test_images(const DatasetManifest& manifest) {
  std::vector<TestImage> images;
  std::map<std::string, std::size_t> slot;
  for (const auto* e : manifest.with_role(Role::Test)) {
    auto [it, inserted] = slot.try_emplace(e->id, images.size());
    if (inserted) images.push_back({e->id, e->label, e->mask, {}});
    auto& img = images[it->second];
    if (img.label != e->label || img.mask != e->mask)
      fail(ErrorCode::Validation,
           "shift variants of image '" + e->id + "' disagree on label or mask");
    img.variants.emplace_back(e->shift.value_or(ShiftOffset{}), e->tensor);
  }
  return images;
}

ScoredImage score_image(const ModelBundle& model, const CentroidIndex& index,
                        const TestImage& image, const DatasetManifest& manifest,
                        const RunConfig& config) {
  const auto variants =
      variant_features(image, manifest, model.selection, config.hp.r, config.feature_shift);
  std::vector<ShiftVariant> scored;
  for (const auto& [offset, fm] : variants) {
    auto r = score_reduced(model, index, fm, config.hp.q, config.hp.k_top);
    scored.push_back({offset, std::move(r.map), r.score.value});
  }
  auto agg = aggregate_variants(std::move(scored), config.hp.r, manifest);
  return {image.id, image.label, gaussian_smooth(agg.map, config.smooth_sigma), agg.score};
}

std::string cmd_fit(const RunConfig& config, const fs::path& manifest_path,
                    const fs::path& out_dir) {
  config.validate();
  set_max_threads(config.threads);
  const auto manifest = load_manifest(manifest_path);
  const auto train = load_train_features(manifest, config);
  const auto fitted = fit_model(train, config);
  if (!config.dump_weights.empty()) write_text(config.dump_weights, fitted.weights.to_json());
  return save_bundle(out_dir, fitted.model, config, train.size());
}

void cmd_score(const fs::path& bundle_dir, const fs::path& manifest_path,
               const std::string& overrides, const fs::path& out_dir) {
  static const std::set<std::string> kInferenceKeys = {
      "q", "r", "k_top", "feature_shift", "smooth_sigma", "threads", "fpr_cap", "pro_thresholds"};
  if (!overrides.empty()) {
    json doc;
    try {
      doc = json::parse(overrides);
    } catch (const json::exception& e) {
      fail(ErrorCode::Config, std::string("score overrides are not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) fail(ErrorCode::Config, "score overrides must be a JSON object");
    for (const auto& [key, value] : doc.items())
      if (!kInferenceKeys.count(key))
        fail(ErrorCode::Config, "'" + key + "' is fixed at fit time and cannot be overridden "
                                            "when scoring");
  }

  const auto bundle = load_bundle(bundle_dir);
  const auto config = bundle.config.merged(overrides);
  set_max_threads(config.threads);
  auto model = bundle.model;
  model.hp = config.hp;

  const auto manifest = load_manifest(manifest_path);
  check_model_matches(model, manifest);
  const auto images = group_test_images(manifest);
  require(!images.empty(), ErrorCode::Validation, "manifest has no test entries");

  const CentroidIndex index(model.bank);
  std::vector<ScoredImage> scored;
  std::set<std::string> names;
  for (const auto& image : images) {
    require(image.id.find_first_of(",\n\r") == std::string::npos, ErrorCode::Validation,
            "image id '" + image.id + "' contains a comma or newline");
    require(names.insert(safe_name(image.id)).second, ErrorCode::Validation,
            "image ids collide after filename sanitization: '" + image.id + "'");
    scored.push_back(score_image(model, index, image, manifest, config));
  }

  std::vector<double> pooled;
  for (const auto& s : scored) pooled.insert(pooled.end(), s.map.values().begin(), s.map.values().end());
  const double lo = percentile(pooled, 0.2);
  const double hi = percentile(pooled, 0.8);

  write_directory_atomically(out_dir, [&](const fs::path& tmp) {
    fs::create_directories(tmp / "maps");
    fs::create_directories(tmp / "previews");
    std::string csv = "image_id,label,score\n";
    json ids = json::array();
    for (const auto& s : scored) {
      csv += s.id + "," + (s.label ? std::to_string(*s.label) : std::string()) + "," +
             format_double(s.score) + "\n";
      write_tensor(tmp / "maps" / (safe_name(s.id) + ".npad"), to_tensor(s.map));
      write_pgm(tmp / "previews" / (safe_name(s.id) + ".pgm"),
                upsample_map(s.map, manifest.image_h, manifest.image_w), lo, hi);
      ids.push_back(s.id);
    }
    write_text(tmp / "scores.csv", csv);
    json run = {{"bundle_hash", bundle.content_hash},
                {"config", json::parse(config.echo())},
                {"feature_hw", {manifest.feature_h, manifest.feature_w}},
                {"image_hw", {manifest.image_h, manifest.image_w}},
                {"preview_range", {lo, hi}},
                {"images", std::move(ids)}};
    write_text(tmp / "run.json", run.dump(2) + "\n");
  });
}

Mask load_mask(const std::optional<fs::path>& path, std::size_t height, std::size_t width) {
  if (!path) return Mask(height, width);
  const auto t = read_tensor(*path);
  require(t.dtype() == DType::U8 && t.shape().size() == 2 && t.shape()[0] == height &&
              t.shape()[1] == width,
          ErrorCode::ShapeMismatch, "mask '" + path->string() + "' must be u8 at image_hw");
  const auto v = t.values<std::uint8_t>();
  return Mask(height, width, std::vector<std::uint8_t>(v.begin(), v.end()));
}

double pixel_auroc(std::span<const AnomalyMap> maps, std::span<const Mask> masks) {
  require(maps.size() == masks.size(), ErrorCode::InvalidArgument, "one mask per map required");
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto up = upsample_map(maps[i], masks[i].height, masks[i].width);
    scores.insert(scores.end(), up.values().begin(), up.values().end());
    labels.insert(labels.end(), masks[i].values.begin(), masks[i].values.end());
  }
  return auroc(scores, labels);
}

EvaluationReport cmd_evaluate(const fs::path& scores_dir, const fs::path& manifest_path,
                              const RunConfig& config, const fs::path& out_path,
                              const fs::path& curves_path) {
  config.validate();
  set_max_threads(config.threads);
  const auto manifest = load_manifest(manifest_path);
  const auto images = group_test_images(manifest);
  std::map<std::string, const TestImage*> by_id;
  for (const auto& img : images) by_id[img.id] = &img;

  // scores.csv rows in file order.
  std::istringstream csv(read_text(scores_dir / "scores.csv"));
  std::string line;
  std::getline(csv, line);
  if (line != "image_id,label,score")
    fail(ErrorCode::Format, "scores.csv has an unexpected header");
  struct Row {
    const TestImage* image;
    double score;
  };
  std::vector<Row> rows;
  std::set<std::string> seen;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.rfind(',');
    if (c1 == std::string::npos || c1 == c2) fail(ErrorCode::Format, "malformed scores.csv row");
    const std::string id = line.substr(0, c1);
    const auto it = by_id.find(id);
    if (it == by_id.end())
      fail(ErrorCode::Validation, "scores.csv has image id '" + id + "' unknown to the manifest");
    if (!seen.insert(id).second)
      fail(ErrorCode::Validation, "scores.csv lists image id '" + id + "' twice");
    rows.push_back({it->second, std::stod(line.substr(c2 + 1))});
  }
  for (const auto& img : images)
    if (!seen.count(img.id))
      fail(ErrorCode::Validation, "manifest image '" + img.id + "' has no score");

  EvaluationReport report;
  json per_image = json::array();
  std::vector<double> image_scores;
  std::vector<std::uint8_t> image_labels;
  bool labels_complete = true;
  bool masks_complete = true;
  for (const auto& row : rows) {
    const auto& img = *row.image;
    per_image.push_back({{"image_id", img.id},
                         {"label", img.label ? json(*img.label) : json(nullptr)},
                         {"score", row.score}});
    if (!img.label) {
      labels_complete = false;
      continue;
    }
    image_scores.push_back(row.score);
    image_labels.push_back(static_cast<std::uint8_t>(*img.label));
    if (*img.label == 1 && !img.mask) masks_complete = false;
  }
  const auto both_classes = [](const std::vector<std::uint8_t>& labels) {
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    return pos > 0 && pos < static_cast<std::ptrdiff_t>(labels.size());
  };
  std::optional<RocCurve> roc;
  if (labels_complete && both_classes(image_labels)) {
    report.image_auroc = auroc(image_scores, image_labels);
    roc = roc_curve(image_scores, image_labels);
  }

  std::optional<ProCurve> pro;
  if (labels_complete && masks_complete) {
    std::vector<AnomalyMap> maps(rows.size());
    std::vector<Mask> masks(rows.size());
    parallel_for(rows.size(), [&](std::size_t i) {
      const auto& img = *rows[i].image;
      maps[i] = upsample_map(
          to_anomaly_map(read_tensor(scores_dir / "maps" / (safe_name(img.id) + ".npad"))),
          manifest.image_h, manifest.image_w);
      masks[i] = load_mask(img.mask, manifest.image_h, manifest.image_w);
    });
    std::vector<double> pixels;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      pixels.insert(pixels.end(), maps[i].values().begin(), maps[i].values().end());
      labels.insert(labels.end(), masks[i].values.begin(), masks[i].values.end());
    }
    if (both_classes(labels)) {
      report.pixel_auroc = auroc(pixels, labels);
      pro = pro_curve(maps, masks, config.fpr_cap, config.pro_thresholds);
      report.pro_score = pro->score;
    }
  }

  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json doc = {{"image_auroc", opt(report.image_auroc)},
              {"pixel_auroc", opt(report.pixel_auroc)},
              {"pro_score", opt(report.pro_score)},
              {"fpr_cap", config.fpr_cap},
              {"pro_thresholds", config.pro_thresholds},
              {"n_images", rows.size()},
              {"per_image", std::move(per_image)}};
  report.json = doc.dump(2) + "\n";
  if (!out_path.empty()) {
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_text(out_path, report.json);
  }

  if (!curves_path.empty()) {
    std::string out = "curve,threshold,fpr,value\n";
    if (roc)
      for (std::size_t i = 0; i < roc->fpr.size(); ++i)
        out += "roc," + format_double(roc->thresholds[i]) + "," + format_double(roc->fpr[i]) +
               "," + format_double(roc->tpr[i]) + "\n";
    if (pro)
      for (std::size_t i = 0; i < pro->fpr.size(); ++i)
        out += "pro," + format_double(pro->thresholds[i]) + "," + format_double(pro->fpr[i]) +
               "," + format_double(pro->overlap[i]) + "\n";
    write_text(curves_path, out);
  }
  return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, const fs::path& data_dir,
                                    const fs::path& out_csv) {
  config.validate();
  set_max_threads(config.threads);
  const auto& hp = config.hp;
  const auto train_manifest = load_manifest(data_dir / "train.json");
  const auto test_manifest = load_manifest(data_dir / "test.json");
  const auto train_raw = load_train_features(train_manifest, config);

  const auto counts = count_nonzero_per_channel(train_raw, config.nonzero_abs);
  const auto selection = select_channels(counts, std::min(hp.d, train_raw.front().channels()));
  require(test_manifest.channels == selection.source_channels &&
              test_manifest.feature_h == train_manifest.feature_h &&
              test_manifest.feature_w == train_manifest.feature_w,
          ErrorCode::ShapeMismatch, "train and test tensors differ in shape");
  std::vector<FeatureMap> train;
  for (const auto& fm : train_raw) train.push_back(apply_selection(fm, selection));

  const FitOptions options{.allow_single_sample = train.size() == 1};
  const auto base = fit_pixel_gaussians(train, hp.epsilon, options);
  const auto aggregate = fit_aggregate_field(train, hp.p, hp.epsilon, options);

  const auto images = group_test_images(test_manifest);
  std::vector<Mask> masks;
  std::vector<std::vector<std::pair<ShiftOffset, FeatureMap>>> variants;
  for (const auto& img : images) {
    require(img.label.has_value(), ErrorCode::Validation,
            "ablation needs labels on every test image");
    require(*img.label == 0 || img.mask.has_value(), ErrorCode::Validation,
            "anomalous image '" + img.id + "' has no mask");
    masks.push_back(load_mask(img.mask, test_manifest.image_h, test_manifest.image_w));
    variants.push_back(variant_features(img, test_manifest, selection, hp.r, true));
  }

  auto unshifted = [](const std::vector<std::pair<ShiftOffset, FeatureMap>>& v)
      -> const FeatureMap& {
    for (const auto& [off, fm] : v)
      if (off == ShiftOffset{0, 0}) return fm;
    fail(ErrorCode::Validation, "image has no unshifted variant");
  };
  auto finish = [&](AnomalyMap m) { return gaussian_smooth(m, config.smooth_sigma); };

  std::vector<AblationRow> rows;
  auto record = [&](const char* table, const std::string& method,
                    const std::vector<AnomalyMap>& maps) {
    rows.push_back({table, method, pixel_auroc(maps, masks)});
  };

  // Full pipeline maps for one weighted field: shift-ensembled sqrt(D1_q * D2).
  auto full_maps = [&](const GaussianField& weighted) {
    std::vector<AnomalyMap> maps;
    for (const auto& v : variants) {
      std::vector<ShiftVariant> sv;
      for (const auto& [off, fm] : v)
        sv.push_back({off, combine_maps(score_d1(fm, weighted, hp.q), score_d2(fm, aggregate, hp.p)), 0.0});
      maps.push_back(finish(aggregate_variants(std::move(sv), hp.r, test_manifest).map));
    }
    return maps;
  };

  const auto similarity = fit_weighted_field(train, base, hp.p, hp.gamma, hp.epsilon,
                                             {WeightScheme::Similarity, config.bc_form, config.seed});
  {
    std::vector<AnomalyMap> e1, e2, e3, e4, e5;
    for (const auto& v : variants) {
      const auto& fm = unshifted(v);
      const auto d1_own = score_d1(fm, similarity.field, 1);
      const auto d1_q = score_d1(fm, similarity.field, hp.q);
      const auto d2 = score_d2(fm, aggregate, hp.p);
      e1.push_back(finish(d1_own));
      e2.push_back(finish(d2));
      e3.push_back(finish(combine_maps(d1_own, d2)));
      e4.push_back(finish(d1_q));
      e5.push_back(finish(combine_maps(d1_q, d2)));
    }
    record("modules", "Exper1", e1);
    record("modules", "Exper2", e2);
    record("modules", "Exper3", e3);
    record("modules", "Exper4", e4);
    record("modules", "Exper5", e5);
  }
  const auto full_similarity = full_maps(similarity.field);
  record("modules", "N-pad", full_similarity);

  const auto uniform = fit_weighted_field(train, base, hp.p, hp.gamma, hp.epsilon,
                                          {WeightScheme::Uniform, config.bc_form, config.seed});
  record("sampling", "1/n", full_maps(uniform.field));
  for (std::uint64_t s : {config.seed, config.seed + 1}) {
    const auto random = fit_weighted_field(train, base, hp.p, hp.gamma, hp.epsilon,
                                           {WeightScheme::Random, config.bc_form, s});
    record("sampling", "Random(seed=" + std::to_string(s) + ")", full_maps(random.field));
  }
  record("sampling", "Ours", full_similarity);

  if (!out_csv.empty()) {
    std::string out = "table,method,pixel_auroc\n";
    for (const auto& r : rows) out += r.table + "," + r.method + "," + format_double(r.pixel_auroc) + "\n";
    if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
    write_text(out_csv, out);
  }
  return rows;
}

}  // namespace npad
