#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace utm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned binary container: magic, version, embedded config text, named
/// little-endian f32 parameter blobs, matching optimizer-velocity blobs,
/// epoch and best validation metric. The layout has no padding and no
/// timestamps, so save -> load -> save is byte-identical.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;  // path-free RunConfig echo
  std::vector<std::pair<std::string, std::vector<float>>> params;
  std::vector<std::pair<std::string, std::vector<float>>> velocity;
  std::uint32_t epoch = 0;
  double best_metric = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);

/// Throws IoError on bad magic, version mismatch, truncation or trailing
/// bytes.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace utm
