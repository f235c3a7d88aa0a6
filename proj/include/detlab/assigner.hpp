#pragma once

#include <optional>
#include <vector>

#include "detlab/geometry.hpp"
#include "detlab/losses.hpp"

namespace detlab {

struct GtObject {
  BBox box;
  int class_id = 0;
};

struct LevelSpec {
  int stride = 8;
  int height = 0;
  int width = 0;
};

// Dense location grid over one or more pyramid levels. Location (i, j) of a
// level with stride s sits at image point ((j + 0.5) s, (i + 0.5) s).
// Locations are flattened level-major, row-major.
struct GridSpec {
  std::vector<LevelSpec> levels;

  int level_size(int level) const {
    return levels[level].height * levels[level].width;
  }
  int num_locations() const {
    int n = 0;
    for (std::size_t l = 0; l < levels.size(); ++l) n += level_size(static_cast<int>(l));
    return n;
  }
  int level_offset(int level) const {
    int off = 0;
    for (int l = 0; l < level; ++l) off += level_size(l);
    return off;
  }
  Point location(int level, int i, int j) const {
    const double s = static_cast<double>(levels[level].stride);
    return {(j + 0.5) * s, (i + 0.5) * s};
  }
  bool valid() const;
};

// Per-location result: background, or the claiming ground-truth object.
struct Assignment {
  struct Foreground {
    int gt_index = -1;
    int class_id = -1;
  };
  std::vector<std::optional<Foreground>> per_location;
};

// Adaptive sample selection. Per gt, the k locations per level nearest (L2)
// to the gt center are candidates; candidate IoUs against the gt use a
// square virtual box of side 8 * stride centered at the location. The
// foreground threshold is mean + population standard deviation of those
// IoUs; positives must also have their center inside the gt box. A location
// claimed by several gts goes to the one with the highest virtual-box IoU,
// ties to the lower gt index.
Assignment atss_assign(const GridSpec& grid, const std::vector<GtObject>& gts,
                       int k);

// Foreground location -> target with iou(predicted_box, assigned gt) at the
// gt class, q_weight equal to that iou, and the gt box attached. Background
// -> all-zero target, weight 0, no box.
std::vector<LocationTarget> build_targets(const Assignment& assignment,
                                          const std::vector<BBox>& predicted_boxes,
                                          const std::vector<GtObject>& gts,
                                          int num_classes);

}  // namespace detlab
