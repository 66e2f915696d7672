#include "bundle.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <array>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace npad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTensorFiles[] = {"weighted_mean.npad", "weighted_cov.npad",
                                        "aggregate_mean.npad", "aggregate_cov.npad",
                                        "centroids.npad"};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor field_mean_tensor(const GaussianField& f) {
  return Tensor({static_cast<std::uint32_t>(f.height()), static_cast<std::uint32_t>(f.width()),
                 static_cast<std::uint32_t>(f.dim())},
                f.means());
}

Tensor field_cov_tensor(const GaussianField& f) {
  const auto d = static_cast<std::uint32_t>(f.dim());
  return Tensor({static_cast<std::uint32_t>(f.height()), static_cast<std::uint32_t>(f.width()), d,
                 d},
                f.covariances());
}

GaussianField field_from_tensors(const Tensor& mean, const Tensor& cov, double epsilon) {
  const auto& ms = mean.shape();
  const auto& cs = cov.shape();
  require(ms.size() == 3 && cs.size() == 4 && cs[0] == ms[0] && cs[1] == ms[1] &&
              cs[2] == ms[2] && cs[3] == ms[2],
          ErrorCode::Format, "bundle field tensors have inconsistent shapes");
  return GaussianField(ms[0], ms[1], ms[2], epsilon, mean.as_f64(), cov.as_f64());
}

std::string content_hash(const json& meta_without_hash, const fs::path& dir) {
  std::string payload = meta_without_hash.dump();
  for (const char* name : kTensorFiles) {
    payload += '\n';
    payload += name;
    payload += '\n';
    payload += read_file(dir / name);
  }
  return sha256_hex(payload);
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
    fail(ErrorCode::Internal, "SHA-256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

void write_directory_atomically(const fs::path& dir,
                                const std::function<void(const fs::path&)>& write) {
  const fs::path target = fs::absolute(dir);
  const std::string tag = std::to_string(::getpid());
  const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".tmp-" + tag);
  const fs::path old = target.parent_path() / ("." + target.filename().string() + ".old-" + tag);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  fs::remove_all(tmp, ec);
  if (!fs::create_directories(tmp, ec) || ec)
    fail(ErrorCode::Io, "cannot create '" + tmp.string() + "'");
  try {
    write(tmp);
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  const bool had_old = fs::exists(target);
  if (had_old) {
    fs::rename(target, old, ec);
    if (ec) {
      fs::remove_all(tmp, ec);
      fail(ErrorCode::Io, "cannot replace '" + target.string() + "'");
    }
  }
  fs::rename(tmp, target, ec);
  if (ec) {
    if (had_old) fs::rename(old, target, ec);
    fs::remove_all(tmp, ec);
    fail(ErrorCode::Io, "cannot move output into '" + target.string() + "'");
  }
  if (had_old) fs::remove_all(old, ec);
}

std::string save_bundle(const fs::path& dir, const ModelBundle& model, const RunConfig& config,
                        std::size_t n_train) {
  std::string hash;
  write_directory_atomically(dir, [&](const fs::path& tmp) {
    write_tensor(tmp / "weighted_mean.npad", field_mean_tensor(model.weighted));
    write_tensor(tmp / "weighted_cov.npad", field_cov_tensor(model.weighted));
    write_tensor(tmp / "aggregate_mean.npad", field_mean_tensor(model.aggregate));
    write_tensor(tmp / "aggregate_cov.npad", field_cov_tensor(model.aggregate));
    write_tensor(tmp / "centroids.npad",
                 Tensor({static_cast<std::uint32_t>(model.bank.size()),
                         static_cast<std::uint32_t>(model.bank.dim)},
                        model.bank.centroids));

    json meta;
    meta["format"] = "npad-bundle";
    meta["version"] = 1;
    meta["config"] = json::parse(config.echo());
    meta["n_train"] = n_train;
    meta["dims"] = {{"height", model.weighted.height()},
                    {"width", model.weighted.width()},
                    {"dim", model.weighted.dim()},
                    {"source_channels", model.selection.source_channels}};
    meta["selection"] = model.selection.indices;
    meta["weighted"] = {{"epsilon", model.weighted.epsilon()}};
    meta["aggregate"] = {{"epsilon", model.aggregate.epsilon()}};
    meta["bank"] = {{"k", model.bank.size()},
                    {"ratio", model.bank.ratio},
                    {"seed", model.bank.seed},
                    {"inertia", model.bank.inertia},
                    {"iterations", model.bank.iterations},
                    {"pool_size", model.bank.pool_size}};
    hash = content_hash(meta, tmp);
    meta["content_hash"] = hash;
    std::ofstream out(tmp / "bundle.json", std::ios::trunc);
    out << meta.dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "cannot write bundle metadata");
  });
  return hash;
}

LoadedBundle load_bundle(const fs::path& dir) {
  json meta;
  try {
    meta = json::parse(read_file(dir / "bundle.json"));
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "bundle metadata is not valid JSON: " + std::string(e.what()));
  }
  if (meta.value("format", std::string{}) != "npad-bundle" || meta.value("version", 0) != 1)
    fail(ErrorCode::Format, "'" + dir.string() + "' is not an npad bundle (version 1)");

  LoadedBundle out;
  try {
    out.content_hash = meta.at("content_hash").get<std::string>();
    json without = meta;
    without.erase("content_hash");
    if (content_hash(without, dir) != out.content_hash)
      fail(ErrorCode::Validation, "bundle content hash mismatch in '" + dir.string() + "'");

    out.config = RunConfig::from_json(meta.at("config").dump());
    out.n_train = meta.at("n_train").get<std::size_t>();
    auto& m = out.model;
    m.hp = out.config.hp;
    m.selection.indices = meta.at("selection").get<std::vector<std::size_t>>();
    m.selection.source_channels = meta.at("dims").at("source_channels").get<std::size_t>();
    m.weighted = field_from_tensors(read_tensor(dir / "weighted_mean.npad"),
                                    read_tensor(dir / "weighted_cov.npad"),
                                    meta.at("weighted").at("epsilon").get<double>());
    m.aggregate = field_from_tensors(read_tensor(dir / "aggregate_mean.npad"),
                                     read_tensor(dir / "aggregate_cov.npad"),
                                     meta.at("aggregate").at("epsilon").get<double>());
    const auto centroids = read_tensor(dir / "centroids.npad");
    require(centroids.shape().size() == 2 && centroids.shape()[1] == m.weighted.dim(),
            ErrorCode::Format, "centroid tensor must be K x d");
    m.bank.dim = centroids.shape()[1];
    m.bank.centroids = centroids.as_f64();
    const auto& bank = meta.at("bank");
    m.bank.ratio = bank.at("ratio").get<double>();
    m.bank.seed = bank.at("seed").get<std::uint64_t>();
    m.bank.inertia = bank.at("inertia").get<double>();
    m.bank.iterations = bank.at("iterations").get<std::size_t>();
    m.bank.pool_size = bank.at("pool_size").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, "bundle metadata is incomplete: " + std::string(e.what()));
  }
  const auto& m = out.model;
  require(m.selection.size() == m.weighted.dim() && m.aggregate.height() == m.weighted.height() &&
              m.aggregate.width() == m.weighted.width() && m.aggregate.dim() == m.weighted.dim(),
          ErrorCode::Format, "bundle fields disagree on dimensions");
  return out;
}

}  // namespace npad
