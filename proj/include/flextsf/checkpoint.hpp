#pragma once

#include <string>

#include "flextsf/model.hpp"

namespace flextsf {

// Versioned binary container: magic "FTSF", format version, the model config
// as key-value text, feature-standardization constants, the noise RNG state,
// and named parameter arrays (shape + 64-bit floats, row-major,
// little-endian). Identical model state serializes to identical bytes.
//
// Loading into an existing model fails loudly when any config key differs.

void save_checkpoint(const std::string& path, const FlexTsfModel& model);

// keeps the target model's config; errors on any mismatch with the file
void load_checkpoint(const std::string& path, FlexTsfModel& model);

// rebuilds the model from the stored config and seed
FlexTsfModel load_checkpoint_model(const std::string& path);

}  // namespace flextsf
