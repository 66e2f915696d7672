#include "npad/npad.h"

#include <cstring>
#include <new>
#include <string>

#include "bundle.hpp"
#include "channel_reduce.hpp"
#include "commands.hpp"
#include "json.hpp"
#include "parallel.hpp"
#include "synth.hpp"
#include "tensor_store.hpp"

struct npad_tensor {
  npad::Tensor tensor;
};

struct npad_model {
  explicit npad_model(npad::LoadedBundle loaded)
      : bundle(std::move(loaded)), index(bundle.model.bank) {}
  npad_model(const npad_model&) = delete;
  npad_model& operator=(const npad_model&) = delete;

  npad::LoadedBundle bundle;
  npad::CentroidIndex index;  // points into bundle
};

namespace {

std::string& last_error() {
  thread_local std::string message;
  return message;
}

std::string str(const char* s) { return s ? std::string(s) : std::string(); }

npad_status set_error(npad_status status, const std::string& message) {
  last_error() = message;
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
npad_status guarded(F&& body) {
  try {
    body();
    last_error().clear();
    return NPAD_OK;
  } catch (const npad::Error& e) {
    return set_error(static_cast<npad_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(NPAD_ERR_OUT_OF_MEMORY, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return set_error(NPAD_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return set_error(NPAD_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(NPAD_ERR_INTERNAL, "unknown error");
  }
}

void require_arg(const void* p, const char* name) {
  if (!p) npad::fail(npad::ErrorCode::InvalidArgument, std::string(name) + " must not be NULL");
}

char* duplicate(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* npad_version(void) { return "1.0.0"; }

const char* npad_last_error(void) { return last_error().c_str(); }

const char* npad_status_string(npad_status status) {
  switch (status) {
    case NPAD_OK: return "ok";
    case NPAD_ERR_IO: return "i/o error";
    case NPAD_ERR_FORMAT: return "format error";
    case NPAD_ERR_TRUNCATED: return "truncated file";
    case NPAD_ERR_UNKNOWN_DTYPE: return "unknown dtype";
    case NPAD_ERR_INVALID_ARGUMENT: return "invalid argument";
    case NPAD_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case NPAD_ERR_VALIDATION: return "validation error";
    case NPAD_ERR_NUMERICAL: return "numerical error";
    case NPAD_ERR_CONFIG: return "config error";
    case NPAD_ERR_INTERNAL: return "internal error";
    case NPAD_ERR_OUT_OF_MEMORY: return "out of memory";
  }
  return "unknown status";
}

void npad_string_free(char* s) { delete[] s; }

npad_status npad_set_threads(int threads) {
  return guarded([&] {
    npad::require(threads >= 1, npad::ErrorCode::InvalidArgument, "threads must be at least 1");
    npad::set_max_threads(threads);
  });
}

npad_status npad_tensor_create(npad_dtype dtype, const uint32_t* shape, size_t ndim,
                               const void* data, npad_tensor** out) {
  return guarded([&] {
    require_arg(out, "out");
    require_arg(shape, "shape");
    require_arg(data, "data");
    *out = nullptr;
    std::vector<std::uint32_t> dims(shape, shape + ndim);
    std::size_t n = ndim == 0 ? 0 : 1;
    for (auto d : dims) n *= d;
    npad::Tensor::Storage storage;
    switch (dtype) {
      case NPAD_F32: {
        const auto* p = static_cast<const float*>(data);
        storage = std::vector<float>(p, p + n);
        break;
      }
      case NPAD_F64: {
        const auto* p = static_cast<const double*>(data);
        storage = std::vector<double>(p, p + n);
        break;
      }
      case NPAD_U8: {
        const auto* p = static_cast<const std::uint8_t*>(data);
        storage = std::vector<std::uint8_t>(p, p + n);
        break;
      }
      default:
        npad::fail(npad::ErrorCode::UnknownDType, "unknown dtype " + std::to_string(dtype));
    }
    *out = new npad_tensor{npad::Tensor(std::move(dims), std::move(storage))};
  });
}

npad_status npad_tensor_read(const char* path, npad_tensor** out) {
  return guarded([&] {
    require_arg(path, "path");
    require_arg(out, "out");
    *out = nullptr;
    *out = new npad_tensor{npad::read_tensor(path)};
  });
}

npad_status npad_tensor_write(const npad_tensor* tensor, const char* path) {
  return guarded([&] {
    require_arg(tensor, "tensor");
    require_arg(path, "path");
    npad::write_tensor(path, tensor->tensor);
  });
}

npad_dtype npad_tensor_dtype(const npad_tensor* tensor) {
  return static_cast<npad_dtype>(tensor->tensor.dtype());
}

size_t npad_tensor_ndim(const npad_tensor* tensor) { return tensor->tensor.shape().size(); }

uint32_t npad_tensor_dim(const npad_tensor* tensor, size_t axis) {
  const auto& shape = tensor->tensor.shape();
  return axis < shape.size() ? shape[axis] : 0;
}

size_t npad_tensor_size(const npad_tensor* tensor) { return tensor->tensor.size(); }

const void* npad_tensor_data(const npad_tensor* tensor) {
  return std::visit([](const auto& v) { return static_cast<const void*>(v.data()); },
                    tensor->tensor.storage());
}

void npad_tensor_free(npad_tensor* tensor) { delete tensor; }

npad_status npad_fit(const char* config_json, const char* manifest_path, const char* out_dir,
                     char* hash_out) {
  return guarded([&] {
    require_arg(manifest_path, "manifest_path");
    require_arg(out_dir, "out_dir");
    const auto config = npad::RunConfig::from_json(str(config_json));
    const auto hash = npad::cmd_fit(config, manifest_path, out_dir);
    if (hash_out) std::memcpy(hash_out, hash.c_str(), hash.size() + 1);
  });
}

npad_status npad_score(const char* bundle_dir, const char* manifest_path,
                       const char* overrides_json, const char* out_dir) {
  return guarded([&] {
    require_arg(bundle_dir, "bundle_dir");
    require_arg(manifest_path, "manifest_path");
    require_arg(out_dir, "out_dir");
    npad::cmd_score(bundle_dir, manifest_path, str(overrides_json), out_dir);
  });
}

npad_status npad_evaluate(const char* scores_dir, const char* manifest_path,
                          const char* config_json, const char* out_path, const char* curves_path,
                          char** report_json) {
  return guarded([&] {
    require_arg(scores_dir, "scores_dir");
    require_arg(manifest_path, "manifest_path");
    if (report_json) *report_json = nullptr;
    const auto config = npad::RunConfig::from_json(str(config_json));
    const auto report =
        npad::cmd_evaluate(scores_dir, manifest_path, config, str(out_path), str(curves_path));
    if (report_json) *report_json = duplicate(report.json);
  });
}

npad_status npad_ablate(const char* config_json, const char* data_dir, const char* out_csv,
                        char** rows_json) {
  return guarded([&] {
    require_arg(data_dir, "data_dir");
    if (rows_json) *rows_json = nullptr;
    const auto config = npad::RunConfig::from_json(str(config_json));
    const auto rows = npad::cmd_ablate(config, data_dir, str(out_csv));
    if (rows_json) {
      auto doc = nlohmann::json::array();
      for (const auto& r : rows)
        doc.push_back({{"table", r.table}, {"method", r.method}, {"pixel_auroc", r.pixel_auroc}});
      *rows_json = duplicate(doc.dump());
    }
  });
}

npad_status npad_synth(const char* synth_json, const char* out_dir) {
  return guarded([&] {
    require_arg(out_dir, "out_dir");
    npad::generate_synthetic(npad::SynthConfig::from_json(str(synth_json)), out_dir);
  });
}

npad_status npad_model_load(const char* bundle_dir, npad_model** out) {
  return guarded([&] {
    require_arg(bundle_dir, "bundle_dir");
    require_arg(out, "out");
    *out = nullptr;
    *out = new npad_model(npad::load_bundle(bundle_dir));
  });
}

npad_status npad_model_info(const npad_model* model, char** info_json) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(info_json, "info_json");
    const auto& m = model->bundle.model;
    nlohmann::json doc = {{"config", nlohmann::json::parse(model->bundle.config.echo())},
                          {"content_hash", model->bundle.content_hash},
                          {"n_train", model->bundle.n_train},
                          {"feature_hw", {m.weighted.height(), m.weighted.width()}},
                          {"channels", m.selection.source_channels},
                          {"selected_channels", m.selection.indices},
                          {"centroids", m.bank.size()}};
    *info_json = duplicate(doc.dump());
  });
}

npad_status npad_model_score(const npad_model* model, const npad_tensor* features,
                             double* image_score, npad_tensor** map_out) {
  return guarded([&] {
    require_arg(model, "model");
    require_arg(features, "features");
    if (map_out) *map_out = nullptr;
    const auto& m = model->bundle.model;
    const auto fm = npad::to_feature_map(features->tensor);
    npad::require(fm.height() == m.weighted.height() && fm.width() == m.weighted.width() &&
                      fm.channels() == m.selection.source_channels,
                  npad::ErrorCode::ShapeMismatch, "features do not match the model shape");
    const auto result = npad::score_reduced(m, model->index, npad::apply_selection(fm, m.selection),
                                            m.hp.q, m.hp.k_top);
    if (image_score) *image_score = result.score.value;
    if (map_out) *map_out = new npad_tensor{npad::to_tensor(result.map, npad::DType::F64)};
  });
}

void npad_model_free(npad_model* model) { delete model; }

}  // extern "C"
