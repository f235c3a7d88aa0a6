#pragma once

#include <array>

namespace detlab {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Axis-aligned box in corner form, continuous coordinates (no pixel +1
// conventions). Zero-area boxes are legal values.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  Point center() const { return {0.5 * (x1 + x2), 0.5 * (y1 + y2)}; }
  bool contains(Point p) const {
    return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2;
  }
  bool valid() const;
};

// Per-location box encoding: distances from a point to the left, top, right
// and bottom sides of its box.
struct DistanceVector {
  double l = 0.0;
  double t = 0.0;
  double r = 0.0;
  double b = 0.0;
  bool valid() const;
};

// Multiplicative residual factors mapping an initial distance vector to the
// refined one.
struct RefineScales {
  double dl = 1.0;
  double dt = 1.0;
  double dr = 1.0;
  double db = 1.0;
  bool valid() const;
};

// The nine fixed sampling locations derived from a point and its distance
// vector: anchor, four side projections, four corners. Index 0 is the anchor.
using StarPoints = std::array<Point, 9>;

// Intersection over union in [0, 1]. A zero-area union yields 0.
double iou(const BBox& a, const BBox& b);

// iou minus (hull - union) / hull where hull is the smallest enclosing box.
// A zero-area hull yields 0.
double giou(const BBox& a, const BBox& b);

struct GiouLossResult {
  double loss = 0.0;
  // d(loss)/d(pred.x1, pred.y1, pred.x2, pred.y2). Exact except on
  // measure-zero boundary configurations, where a one-sided subgradient is
  // returned.
  std::array<double, 4> grad{};
};

// 1 - giou(pred, gt) with its analytic gradient w.r.t. the pred coordinates.
GiouLossResult giou_loss(const BBox& pred, const BBox& gt);

// Box spanned by a distance vector around a point: [x-l, y-t, x+r, y+b].
BBox decode_distances(Point p, const DistanceVector& dv);

// Inverse of decode_distances. Throws ValidationError if the point lies
// outside the box.
DistanceVector encode_distances(Point p, const BBox& box);

// Ordered sampling points: (x,y), (x-l,y), (x,y-t), (x+r,y), (x,y+b),
// (x-l,y-t), (x+r,y-t), (x-l,y+b), (x+r,y+b).
StarPoints star_points(Point p, const DistanceVector& dv);

// Componentwise product of distances and scales.
DistanceVector refine(const DistanceVector& dv, const RefineScales& s);

// sqrt((min(l,r)/max(l,r)) * (min(t,b)/max(t,b))); 0 when a pair is
// degenerate. Measures how central the anchor sits within its box.
double centerness(const DistanceVector& dv);

}  // namespace detlab
