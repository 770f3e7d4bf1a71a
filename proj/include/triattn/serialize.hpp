#pragma once

#include <string>

#include "triattn/model.hpp"

namespace triattn {

// Config as a JSON object; enum fields use their CLI spellings. Parsing
// accepts a partial object (missing keys keep the defaults) and rejects
// unknown keys so a typo never silently trains the wrong setup.
std::string configToJson(const TanConfig& config);
TanConfig configFromJson(const std::string& text);

// Model snapshot, format_version 1. Field order: format_version, encoder
// (vocab_size, embed_dim, pad_id, cls_id, sep_id, table), layers (W, U, H,
// p, Wt, Uv, Hc per layer), classifier_w, classifier_b. Matrices carry
// rows/cols with column-major flat data; the score tensor carries its three
// dims with row-major flat data; absent parameter blocks are null.
std::string stateToJson(const TanState& state);
TanState stateFromJson(const std::string& text);

void saveModel(const std::string& path, const TanState& state);
TanState loadModel(const std::string& path);

}  // namespace triattn
