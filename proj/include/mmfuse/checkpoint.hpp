#pragma once
// Model checkpoints: magic `MMCK`, version, config, class list, vocabulary,
// then named parameter tensors as little-endian f64. Round-trips bit-exact.

#include "mmfuse/fusion.hpp"

#include <string>

namespace mmfuse {

void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

} // namespace mmfuse
