#pragma once

#include <string>

#include "holofocus/models.hpp"

namespace holo::io {

// Checkpoint layout: <dir>/model.json describing family/config/seed/epoch
// and the parameter table, plus one little-endian float32 blob per
// parameter tensor named by its layer path.
void save_checkpoint(ModelGraph<float>& model, const std::string& dir, int epoch,
                     const nlohmann::json& extra = {});

ModelGraph<float> load_checkpoint(const std::string& dir);

nlohmann::json read_checkpoint_meta(const std::string& dir);

} // namespace holo::io
