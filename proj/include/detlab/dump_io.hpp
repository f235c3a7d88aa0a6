#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "detlab/eval.hpp"
#include "detlab/geometry.hpp"
#include "detlab/ranking.hpp"

namespace detlab {

// One-document JSON dump of a dataset plus (optionally) model outputs.
// Boxes are corner form [x1, y1, x2, y2]; a converter flag accepts
// [x, y, w, h] input. Field names are part of the format:
//   images:      [{id, width, height}]
//   annotations: [{image_id, bbox, class_id}]
//   detections:  [{image_id, bbox, class_id?, score?, score_vector?,
//                  ctr?, level?, anchor?, gt_index?}]
// A detection carries either a scalar score with class_id or a full
// score_vector. anchor ([x, y]) and gt_index tie a candidate to its
// generating location and assigned object so ranking oracles can be
// re-applied from the file alone.
struct DumpImage {
  int id = 0;
  double width = 0.0;
  double height = 0.0;
};

struct DumpAnnotation {
  int image_id = 0;
  BBox box;
  int class_id = 0;
};

struct DumpDetection {
  int image_id = 0;
  BBox box;
  int class_id = -1;                          // with scalar score
  double score = 0.0;                         // used when score_vector absent
  std::optional<std::vector<double>> score_vector;
  std::optional<double> ctr;
  int level = 0;
  std::optional<Point> anchor;
  std::optional<int> gt_index;
};

struct Dump {
  std::vector<DumpImage> images;
  std::vector<DumpAnnotation> annotations;
  std::vector<DumpDetection> detections;
};

// Parses and validates; every violation names the field and record index.
// xywh converts incoming boxes from [x, y, w, h].
Dump read_dump(const std::string& path, bool xywh = false);
Dump parse_dump(const std::string& text, bool xywh = false);

std::string render_dump(const Dump& dump);
void write_dump(const Dump& dump, const std::string& path);

// Score vectors (or scalar scores widened to num_classes) as ranking
// candidates, grouped by image id. source_index is the per-image record
// order.
std::map<int, std::vector<Candidate>> candidates_from_dump(const Dump& dump,
                                                           int num_classes);

std::vector<GtRecord> gt_records_from_dump(const Dump& dump);

}  // namespace detlab
