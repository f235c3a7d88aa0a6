#include "detlab/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "detlab/errors.hpp"

namespace detlab {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
         std::isfinite(y2) && x1 <= x2 && y1 <= y2;
}

bool DistanceVector::valid() const {
  return std::isfinite(l) && std::isfinite(t) && std::isfinite(r) &&
         std::isfinite(b) && l >= 0.0 && t >= 0.0 && r >= 0.0 && b >= 0.0;
}

bool RefineScales::valid() const {
  return std::isfinite(dl) && std::isfinite(dt) && std::isfinite(dr) &&
         std::isfinite(db) && dl > 0.0 && dt > 0.0 && dr > 0.0 && db > 0.0;
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  const double hull = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                      (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (hull <= 0.0) return 0.0;
  const double iou_term = uni > 0.0 ? inter / uni : 0.0;
  return iou_term - (hull - uni) / hull;
}

GiouLossResult giou_loss(const BBox& pred, const BBox& gt) {
  GiouLossResult out;

  const double iw = std::min(pred.x2, gt.x2) - std::max(pred.x1, gt.x1);
  const double ih = std::min(pred.y2, gt.y2) - std::max(pred.y1, gt.y1);
  const bool overlap = iw > 0.0 && ih > 0.0;
  const double inter = overlap ? iw * ih : 0.0;

  const double pw = pred.width();
  const double ph = pred.height();
  const double uni = pred.area() + gt.area() - inter;

  const double hw = std::max(pred.x2, gt.x2) - std::min(pred.x1, gt.x1);
  const double hh = std::max(pred.y2, gt.y2) - std::min(pred.y1, gt.y1);
  const double hull = hw * hh;

  if (hull <= 0.0) {
    out.loss = 1.0;  // giou defined as 0 on a degenerate hull
    return out;
  }
  const double iou_term = uni > 0.0 ? inter / uni : 0.0;
  out.loss = 1.0 - (iou_term - (hull - uni) / hull);

  // d inter / d(pred coords); zero when boxes do not overlap since inter is
  // locally identically zero there.
  std::array<double, 4> d_inter{};
  if (overlap) {
    d_inter[0] = (pred.x1 >= gt.x1) ? -ih : 0.0;
    d_inter[1] = (pred.y1 >= gt.y1) ? -iw : 0.0;
    d_inter[2] = (pred.x2 <= gt.x2) ? ih : 0.0;
    d_inter[3] = (pred.y2 <= gt.y2) ? iw : 0.0;
  }
  const std::array<double, 4> d_area = {-ph, -pw, ph, pw};
  std::array<double, 4> d_hull{};
  d_hull[0] = (pred.x1 <= gt.x1) ? -hh : 0.0;
  d_hull[1] = (pred.y1 <= gt.y1) ? -hw : 0.0;
  d_hull[2] = (pred.x2 >= gt.x2) ? hh : 0.0;
  d_hull[3] = (pred.y2 >= gt.y2) ? hw : 0.0;

  for (int k = 0; k < 4; ++k) {
    const double d_uni = d_area[k] - d_inter[k];
    double d_giou = 0.0;
    if (uni > 0.0) {
      d_giou += (d_inter[k] * uni - inter * d_uni) / (uni * uni);
    }
    // (hull - uni)/hull = 1 - uni/hull
    d_giou += (d_uni * hull - uni * d_hull[k]) / (hull * hull);
    out.grad[k] = -d_giou;
  }
  return out;
}

BBox decode_distances(Point p, const DistanceVector& dv) {
  return {p.x - dv.l, p.y - dv.t, p.x + dv.r, p.y + dv.b};
}

DistanceVector encode_distances(Point p, const BBox& box) {
  if (!box.contains(p)) {
    throw ValidationError("encode_distances: point lies outside the box");
  }
  return {p.x - box.x1, p.y - box.y1, box.x2 - p.x, box.y2 - p.y};
}

StarPoints star_points(Point p, const DistanceVector& dv) {
  const double xl = p.x - dv.l;
  const double xr = p.x + dv.r;
  const double yt = p.y - dv.t;
  const double yb = p.y + dv.b;
  return StarPoints{{{p.x, p.y},
                     {xl, p.y},
                     {p.x, yt},
                     {xr, p.y},
                     {p.x, yb},
                     {xl, yt},
                     {xr, yt},
                     {xl, yb},
                     {xr, yb}}};
}

DistanceVector refine(const DistanceVector& dv, const RefineScales& s) {
  return {dv.l * s.dl, dv.t * s.dt, dv.r * s.dr, dv.b * s.db};
}

double centerness(const DistanceVector& dv) {
  const double lr_max = std::max(dv.l, dv.r);
  const double tb_max = std::max(dv.t, dv.b);
  if (lr_max <= 0.0 || tb_max <= 0.0) return 0.0;
  const double lr = std::min(dv.l, dv.r) / lr_max;
  const double tb = std::min(dv.t, dv.b) / tb_max;
  return std::sqrt(lr * tb);
}

}  // namespace detlab
