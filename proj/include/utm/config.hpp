#pragma once

#include <cstdint>
#include <string>

#include "utm/bfe.hpp"
#include "utm/fusion.hpp"
#include "utm/mdn.hpp"
#include "utm/sgd.hpp"

namespace utm {

/// Everything one run needs. The text form is flat `key = value` lines with
/// full-line `#` comments; configs/desk.cfg is the annotated reference.
struct RunConfig {
  FusionStrategy strategy = FusionStrategy::kUgf;
  BfeConfig bfe;
  SgdConfig sgd;  // total_epochs mirrors `epochs` when a run starts
  bool auto_anchors = true;
  AnchorSet anchors = AnchorSet::fallback();
  double conf_threshold = 0.001;  // decode threshold for evaluation inference
  double nms_iou = 0.60;
  std::string dataset_dir;
  std::string output_dir;
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 1234;

  /// Checks every field except the path strings, which the operations that
  /// actually touch the filesystem validate themselves.
  void validate() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// One `key = value` assignment through the same code path the file parser
/// uses, so command-line overrides behave exactly like file keys.
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

/// Canonical text form. Doubles are printed with full precision so
/// parse(serialize(cfg)) is exact. Checkpoints embed the path-free form,
/// keeping identical runs byte-identical regardless of where they write.
std::string serialize_config(const RunConfig& cfg, bool include_paths = true);

void write_config(const RunConfig& cfg, const std::string& path);

}  // namespace utm
