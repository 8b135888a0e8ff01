#pragma once

#include <fbm/autodiff/parameters.hpp>
#include <fbm/core/container.hpp>

#include <string>

namespace fbm::ad {

inline constexpr const char* kCheckpointMagic = "FBMCKPT1";
inline constexpr int kCheckpointSchema = 1;

// Writes parameters in the given order. `hyperparameters` must carry enough
// to rebuild the model that owns them.
inline void save_checkpoint(const std::string& path, const ConstParamRefs& params,
                            const nlohmann::json& hyperparameters, long training_step) {
  require_unique_names(params);
  io::Container c;
  c.header["schema"] = kCheckpointSchema;
  c.header["hyperparameters"] = hyperparameters;
  c.header["training_step"] = training_step;
  nlohmann::json names = nlohmann::json::array();
  for (const Parameter* p : params) {
    names.push_back({{"name", p->name}, {"shape", {p->value.rows(), p->value.cols()}}});
    c.blocks.push_back(p->value);
  }
  c.header["parameters"] = names;
  io::write_container(path, kCheckpointMagic, std::move(c));
}

struct CheckpointInfo {
  nlohmann::json hyperparameters;
  long training_step = 0;
};

inline CheckpointInfo read_checkpoint_info(const std::string& path) {
  io::Container c = io::read_container(path, kCheckpointMagic);
  return {c.header.at("hyperparameters"), c.header.at("training_step").get<long>()};
}

// Loads values into parameters matched by name; every parameter must be
// present with the same shape.
inline CheckpointInfo load_checkpoint(const std::string& path, const ParamRefs& params) {
  io::Container c = io::read_container(path, kCheckpointMagic);
  const auto& names = c.header.at("parameters");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < names.size(); ++i) index[names[i].at("name").get<std::string>()] = i;
  for (Parameter* p : params) {
    auto it = index.find(p->name);
    if (it == index.end()) throw ContractViolation("checkpoint lacks parameter " + p->name);
    const Matrix& m = c.blocks[it->second];
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw ContractViolation("checkpoint shape mismatch for " + p->name + ": " + shape_str(m) +
                               " vs " + shape_str(p->value));
    }
    p->value = m;
  }
  return {c.header.at("hyperparameters"), c.header.at("training_step").get<long>()};
}

}  // namespace fbm::ad
