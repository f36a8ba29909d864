#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "geoformal/tensor/tensor.hpp"

namespace geoformal::tensor {

/// Named trainable leaves in creation order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value);
  Tensor normal(const std::string& name, Shape shape, Rng& rng, double stddev);
  Tensor zeros(const std::string& name, Shape shape);
  Tensor ones(const std::string& name, Shape shape);

  bool contains(const std::string& name) const { return index_.contains(name); }
  const Tensor& get(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor> all() const { return values_; }
  std::vector<Tensor> with_prefix(std::string_view prefix) const;
  std::vector<Tensor> without_prefix(std::string_view prefix) const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Thrown for unreadable or inconsistent checkpoints.
class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

/// Writes every parameter as little-endian f64 to `path` and a sidecar
/// `path.json` with {"schema": 1, "params": [{name, offset, shape}], "meta"}.
/// Offsets count values, not bytes.
void save_checkpoint(const ParamStore& params, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Sidecar contents of a checkpoint.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

/// Copies stored values into parameters of the same name. Parameters absent
/// from the checkpoint keep their values; a shape disagreement throws.
/// Returns the number of parameters loaded.
std::size_t load_checkpoint(ParamStore& params, const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace geoformal::tensor
