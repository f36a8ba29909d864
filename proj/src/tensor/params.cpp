#include "geoformal/tensor/params.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace geoformal::tensor {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  Tensor leaf(value.shape(), std::vector<double>(value.data().begin(), value.data().end()), true);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(leaf);
  return leaf;
}

Tensor ParamStore::normal(const std::string& name, Shape shape, Rng& rng, double stddev) {
  return add(name, Tensor::randn(std::move(shape), rng, stddev));
}

Tensor ParamStore::zeros(const std::string& name, Shape shape) { return add(name, Tensor::zeros(std::move(shape))); }

Tensor ParamStore::ones(const std::string& name, Shape shape) { return add(name, Tensor::full(std::move(shape), 1.0)); }

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return values_[it->second];
}

std::vector<Tensor> ParamStore::with_prefix(std::string_view prefix) const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].starts_with(prefix)) out.push_back(values_[i]);
  }
  return out;
}

std::vector<Tensor> ParamStore::without_prefix(std::string_view prefix) const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!names_[i].starts_with(prefix)) out.push_back(values_[i]);
  }
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : values_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& t : values_) t.zero_grad();
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto out = path;
  out += ".json";
  return out;
}

namespace {

void put_le(std::ostream& os, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  char bytes[8];
  for (char& b : bytes) {
    b = static_cast<char>(bits & 0xff);
    bits >>= 8;
  }
  os.write(bytes, 8);
}

double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path, const nlohmann::json& meta) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw CheckpointError("cannot write " + path.string());
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& name : params.names()) {
    const Tensor& t = params.get(name);
    for (double x : t.data()) put_le(bin, x);
    entries.push_back({{"name", name}, {"offset", offset}, {"shape", t.shape()}});
    offset += t.numel();
  }
  if (!bin) throw CheckpointError("short write to " + path.string());
  nlohmann::json side = {{"schema", 1}, {"count", offset}, {"params", entries}, {"meta", meta}};
  std::ofstream js(sidecar_path(path));
  if (!js) throw CheckpointError("cannot write " + sidecar_path(path).string());
  js << side.dump(2) << '\n';
}

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream js(sidecar_path(path));
  if (!js) throw CheckpointError("missing checkpoint sidecar " + sidecar_path(path).string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad checkpoint sidecar: " + std::string(e.what()));
  }
  if (side.value("schema", 0) != 1) throw CheckpointError("unsupported checkpoint schema");
  return side;
}

std::size_t load_checkpoint(ParamStore& params, const std::filesystem::path& path) {
  const auto side = read_checkpoint_meta(path);
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw CheckpointError("cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (bytes.size() % 8 != 0) throw CheckpointError("checkpoint size is not a multiple of 8 bytes");
  const std::size_t count = bytes.size() / 8;

  std::size_t loaded = 0;
  try {
    for (const auto& e : side.at("params")) {
      const auto name = e.at("name").get<std::string>();
      if (!params.contains(name)) continue;
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      Tensor t = params.get(name);
      if (shape != t.shape()) {
        throw CheckpointError("checkpoint shape " + shape_str(shape) + " for " + name + " but model has " +
                              shape_str(t.shape()));
      }
      if (offset + t.numel() > count) throw CheckpointError("checkpoint entry " + name + " runs past end of file");
      auto dst = t.mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get_le(bytes.data() + 8 * (offset + i));
      ++loaded;
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad checkpoint sidecar: " + std::string(e.what()));
  }
  return loaded;
}

}  // namespace geoformal::tensor
