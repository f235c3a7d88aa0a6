#include "detlab/dump_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "detlab/errors.hpp"

namespace detlab {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ValidationError("dump: " + where + ": " + what);
}

double need_num(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) fail(where + "." + key, "missing");
  const json& v = obj.at(key);
  if (!v.is_number()) fail(where + "." + key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(where + "." + key, "not finite");
  return d;
}

int need_int(const json& obj, const std::string& where, const char* key) {
  if (!obj.contains(key)) fail(where + "." + key, "missing");
  const json& v = obj.at(key);
  if (!v.is_number_integer()) fail(where + "." + key, "expected an integer");
  return v.get<int>();
}

BBox need_box(const json& obj, const std::string& where, bool xywh) {
  if (!obj.contains("bbox")) fail(where + ".bbox", "missing");
  const json& v = obj.at("bbox");
  if (!v.is_array() || v.size() != 4) fail(where + ".bbox", "expected 4 numbers");
  double c[4];
  for (int i = 0; i < 4; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number())
      fail(where + ".bbox", "expected 4 numbers");
    c[i] = v[static_cast<std::size_t>(i)].get<double>();
    if (!std::isfinite(c[i])) fail(where + ".bbox", "not finite");
  }
  BBox box;
  if (xywh) {
    if (c[2] <= 0.0 || c[3] <= 0.0) fail(where + ".bbox", "w and h must be positive");
    box = BBox{c[0], c[1], c[0] + c[2], c[1] + c[3]};
  } else {
    box = BBox{c[0], c[1], c[2], c[3]};
  }
  if (box.x2 <= box.x1) fail(where + ".bbox", "x2 <= x1");
  if (box.y2 <= box.y1) fail(where + ".bbox", "y2 <= y1");
  return box;
}

void check_keys(const json& obj, const std::string& where,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) fail(where + "." + key, "unknown key");
  }
}

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

Dump parse_dump(const std::string& text, bool xywh) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("dump: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("dump: root must be an object");
  check_keys(root, "root", {"images", "annotations", "detections"});

  Dump dump;
  std::set<int> image_ids;

  if (root.contains("images")) {
    const json& arr = root.at("images");
    if (!arr.is_array()) fail("images", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "images[" + std::to_string(i) + "]";
      const json& obj = arr[i];
      if (!obj.is_object()) fail(where, "expected an object");
      check_keys(obj, where, {"id", "width", "height"});
      DumpImage img;
      img.id = need_int(obj, where, "id");
      img.width = need_num(obj, where, "width");
      img.height = need_num(obj, where, "height");
      if (img.width <= 0.0 || img.height <= 0.0)
        fail(where, "width and height must be positive");
      if (!image_ids.insert(img.id).second) fail(where + ".id", "duplicate image id");
      dump.images.push_back(img);
    }
  }

  auto check_image_ref = [&](int id, const std::string& where) {
    if (!image_ids.count(id)) fail(where + ".image_id", "references no image");
  };

  if (root.contains("annotations")) {
    const json& arr = root.at("annotations");
    if (!arr.is_array()) fail("annotations", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "annotations[" + std::to_string(i) + "]";
      const json& obj = arr[i];
      if (!obj.is_object()) fail(where, "expected an object");
      check_keys(obj, where, {"image_id", "bbox", "class_id"});
      DumpAnnotation ann;
      ann.image_id = need_int(obj, where, "image_id");
      check_image_ref(ann.image_id, where);
      ann.box = need_box(obj, where, xywh);
      ann.class_id = need_int(obj, where, "class_id");
      if (ann.class_id < 0) fail(where + ".class_id", "must be >= 0");
      dump.annotations.push_back(ann);
    }
  }

  if (root.contains("detections")) {
    const json& arr = root.at("detections");
    if (!arr.is_array()) fail("detections", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string where = "detections[" + std::to_string(i) + "]";
      const json& obj = arr[i];
      if (!obj.is_object()) fail(where, "expected an object");
      check_keys(obj, where,
                 {"image_id", "bbox", "class_id", "score", "score_vector", "ctr",
                  "level", "anchor", "gt_index"});
      DumpDetection det;
      det.image_id = need_int(obj, where, "image_id");
      check_image_ref(det.image_id, where);
      det.box = need_box(obj, where, xywh);
      if (obj.contains("score_vector")) {
        const json& sv = obj.at("score_vector");
        if (!sv.is_array() || sv.empty())
          fail(where + ".score_vector", "expected a non-empty array");
        std::vector<double> scores;
        scores.reserve(sv.size());
        for (std::size_t k = 0; k < sv.size(); ++k) {
          if (!sv[k].is_number()) fail(where + ".score_vector", "expected numbers");
          const double s = sv[k].get<double>();
          if (!std::isfinite(s) || s < 0.0 || s > 1.0)
            fail(where + ".score_vector", "scores must lie in [0, 1]");
          scores.push_back(s);
        }
        det.score_vector = std::move(scores);
        if (obj.contains("class_id")) det.class_id = need_int(obj, where, "class_id");
      } else {
        det.class_id = need_int(obj, where, "class_id");
        if (det.class_id < 0) fail(where + ".class_id", "must be >= 0");
        det.score = need_num(obj, where, "score");
        if (det.score < 0.0 || det.score > 1.0)
          fail(where + ".score", "must lie in [0, 1]");
      }
      if (obj.contains("ctr")) {
        det.ctr = need_num(obj, where, "ctr");
        if (*det.ctr < 0.0 || *det.ctr > 1.0) fail(where + ".ctr", "must lie in [0, 1]");
      }
      if (obj.contains("level")) {
        det.level = need_int(obj, where, "level");
        if (det.level < 0) fail(where + ".level", "must be >= 0");
      }
      if (obj.contains("anchor")) {
        const json& a = obj.at("anchor");
        if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
          fail(where + ".anchor", "expected [x, y]");
        det.anchor = Point{a[0].get<double>(), a[1].get<double>()};
        if (!std::isfinite(det.anchor->x) || !std::isfinite(det.anchor->y))
          fail(where + ".anchor", "not finite");
      }
      if (obj.contains("gt_index")) {
        det.gt_index = need_int(obj, where, "gt_index");
        if (*det.gt_index < 0) fail(where + ".gt_index", "must be >= 0");
      }
      dump.detections.push_back(std::move(det));
    }
  }
  return dump;
}

Dump read_dump(const std::string& path, bool xywh) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("dump: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dump(buf.str(), xywh);
}

std::string render_dump(const Dump& dump) {
  json root;
  json images = json::array();
  for (const auto& img : dump.images) {
    images.push_back({{"id", img.id}, {"width", img.width}, {"height", img.height}});
  }
  json annotations = json::array();
  for (const auto& ann : dump.annotations) {
    annotations.push_back({{"image_id", ann.image_id},
                           {"bbox", box_to_json(ann.box)},
                           {"class_id", ann.class_id}});
  }
  json detections = json::array();
  for (const auto& det : dump.detections) {
    json obj = {{"image_id", det.image_id}, {"bbox", box_to_json(det.box)}};
    if (det.score_vector.has_value()) {
      obj["score_vector"] = *det.score_vector;
      if (det.class_id >= 0) obj["class_id"] = det.class_id;
    } else {
      obj["class_id"] = det.class_id;
      obj["score"] = det.score;
    }
    if (det.ctr.has_value()) obj["ctr"] = *det.ctr;
    if (det.level != 0) obj["level"] = det.level;
    if (det.anchor.has_value()) obj["anchor"] = json::array({det.anchor->x, det.anchor->y});
    if (det.gt_index.has_value()) obj["gt_index"] = *det.gt_index;
    detections.push_back(std::move(obj));
  }
  root["images"] = std::move(images);
  root["annotations"] = std::move(annotations);
  root["detections"] = std::move(detections);
  return root.dump(2) + "\n";
}

void write_dump(const Dump& dump, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("dump: cannot open " + path + " for writing");
  out << render_dump(dump);
  if (!out) throw ValidationError("dump: write failed for " + path);
}

std::map<int, std::vector<Candidate>> candidates_from_dump(const Dump& dump,
                                                           int num_classes) {
  if (num_classes <= 0) throw ValidationError("dump: num_classes must be positive");
  std::map<int, std::vector<Candidate>> out;
  for (std::size_t i = 0; i < dump.detections.size(); ++i) {
    const DumpDetection& det = dump.detections[i];
    Candidate c;
    c.box = det.box;
    if (det.score_vector.has_value()) {
      if (static_cast<int>(det.score_vector->size()) != num_classes)
        fail("detections[" + std::to_string(i) + "].score_vector",
             "length differs from the class universe");
      c.scores = *det.score_vector;
    } else {
      if (det.class_id >= num_classes)
        fail("detections[" + std::to_string(i) + "].class_id",
             "outside the class universe");
      c.scores.assign(static_cast<std::size_t>(num_classes), 0.0);
      c.scores[static_cast<std::size_t>(det.class_id)] = det.score;
    }
    c.level = det.level;
    c.ctr = det.ctr;
    auto& group = out[det.image_id];
    c.source_index = static_cast<int>(group.size());
    group.push_back(std::move(c));
  }
  return out;
}

std::vector<GtRecord> gt_records_from_dump(const Dump& dump) {
  std::vector<GtRecord> out;
  out.reserve(dump.annotations.size());
  for (const auto& ann : dump.annotations) {
    out.push_back({ann.image_id, ann.box, ann.class_id});
  }
  return out;
}

}  // namespace detlab
