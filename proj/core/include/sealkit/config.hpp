#pragma once

#include <string>

#include "sealkit/training.hpp"

namespace sealkit {

/// Run description parsed from a JSON config file. Unknown keys are rejected;
/// every field has a documented default (see README).
struct RunConfig {
  ArchConfig arch;
  TrainConfig train;
  std::string dataset_dir;
  std::string suite = "image";
  int64_t checkpoint_every = 500;
  int dataset_limit = 0;  // 0 = use every image

  static RunConfig from_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

}  // namespace sealkit
