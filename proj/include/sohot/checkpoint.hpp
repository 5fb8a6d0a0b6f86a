#pragma once

#include <filesystem>

#include "json.hpp"
#include "sohot/losses.hpp"
#include "sohot/stream.hpp"

namespace sohot {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  TwoStreamModel model;
  AlignmentConfig align;
  nlohmann::json config;  ///< echo of the run configuration, opaque to the loader
};

/// Structured-text (JSON) checkpoint: format_version, shapes, every parameter
/// array in column-major order, the learned alignment weights and a config echo.
nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws ParseError on a malformed file or an unsupported format version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sohot
