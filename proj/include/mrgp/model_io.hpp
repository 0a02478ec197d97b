#pragma once

#include <string>

#include "mrgp/model.hpp"

namespace mrgp {

inline constexpr int kModelFormatVersion = 1;

// JSON document with fields version, dt, input_dim, emission, normalization
// and components[]. Matrices are arrays of rows; doubles are written with
// enough digits to parse back to the same bits.
std::string serialize_model(const Model& model);
Model parse_model(const std::string& text);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace mrgp
