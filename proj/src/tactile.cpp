#include "vtc/tactile.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace vtc {

namespace {

constexpr int kSuper = 4;

// Half-plane n . p <= offset.
struct HalfPlane {
  Vec2 n;
  double offset;
};

// Parametric interval of the line p0 + s d inside all half-planes; empty if lo > hi.
std::pair<double, double> clip_line(const Vec2& p0, const Vec2& d,
                                    const std::vector<HalfPlane>& planes) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (const HalfPlane& h : planes) {
    const double nd = h.n.dot(d);
    const double slack = h.offset - h.n.dot(p0);
    if (std::abs(nd) < 1e-15) {
      if (slack < 0.0) return {1.0, 0.0};
      continue;
    }
    const double s = slack / nd;
    if (nd > 0.0) {
      hi = std::min(hi, s);
    } else {
      lo = std::max(lo, s);
    }
  }
  return {lo, hi};
}

// Pixel-center hull of the sensor: the region in which pose centers are reported.
std::vector<HalfPlane> sensor_region(const TactileSensor& s) {
  const double h = 0.5 * s.pitch_mm;
  return {{Vec2(-1, 0), -h},
          {Vec2(1, 0), s.width_mm() - h},
          {Vec2(0, -1), -h},
          {Vec2(0, 1), s.height_mm() - h}};
}

Vec2 direction(double theta_deg) {
  const double t = deg2rad(theta_deg);
  return Vec2(std::cos(t), std::sin(t));
}

Vec2 sensor_center(const TactileSensor& s) { return Vec2(0.5 * s.width_mm(), 0.5 * s.height_mm()); }

Eigen::Matrix2d rotation2(double deg) {
  const double t = deg2rad(deg);
  Eigen::Matrix2d r;
  r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return r;
}

// Maps a source point to its augmented position.
Vec2 forward_map(const Vec2& p, const AugmentTransform& t, const TactileSensor& s) {
  const Vec2 c = sensor_center(s);
  return rotation2(t.rotation_deg) * (p - c) + c + Vec2(t.tx_mm, t.ty_mm);
}

std::vector<HalfPlane> augmented_region(const AugmentTransform& t, const TactileSensor& s) {
  std::vector<HalfPlane> planes = sensor_region(s);
  const Eigen::Matrix2d r = rotation2(t.rotation_deg);
  for (const HalfPlane& h : sensor_region(s)) {
    // Image of {p : n.p <= o} under p -> r p + b is {q : (r n).q <= o + (r n).b}.
    const Vec2 rn = r * h.n;
    const Vec2 b = forward_map(Vec2::Zero(), t, s);
    planes.push_back({rn, h.offset + rn.dot(b)});
  }
  return planes;
}

std::optional<std::pair<Vec2, double>> chord(const Vec2& p0, double theta_deg,
                                             const std::vector<HalfPlane>& region) {
  const Vec2 d = direction(theta_deg);
  const auto [lo, hi] = clip_line(p0, d, region);
  if (!(lo <= hi)) return std::nullopt;
  return std::make_pair(p0 + 0.5 * (lo + hi) * d, hi - lo);
}

double covered_fraction(const GraspScenario& scn, const TactileSensor& s, int row, int col) {
  switch (scn.category) {
    case GraspCategory::no_fabric:
      return 0.0;
    case GraspCategory::all_fabric:
      return 1.0;
    default:
      break;
  }
  const Vec2 c(scn.cx_mm, scn.cy_mm);
  const Vec2 t = direction(scn.theta_deg);
  const Vec2 n(-t.y(), t.x());
  int hits = 0;
  for (int a = 0; a < kSuper; ++a) {
    for (int b = 0; b < kSuper; ++b) {
      const Vec2 p((col + (a + 0.5) / kSuper) * s.pitch_mm, (row + (b + 0.5) / kSuper) * s.pitch_mm);
      const Vec2 q = p - c;
      bool in = q.dot(n) <= 0.0;
      if (scn.category == GraspCategory::corner) in = in && q.dot(t) <= 0.0;
      hits += in ? 1 : 0;
    }
  }
  return static_cast<double>(hits) / (kSuper * kSuper);
}

// Counter-clockwise convex hull (monotone chain) of a point set.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i - 1]) <= 0.0) --k;
    h[k++] = pts[i - 1];
  }
  h.resize(k - 1);
  return h;
}

std::vector<HalfPlane> hull_planes(const std::vector<Vec2>& hull) {
  std::vector<HalfPlane> planes;
  if (hull.size() < 3) return planes;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % hull.size()];
    const Vec2 n(b.y() - a.y(), a.x() - b.x());  // outward for a CCW polygon
    planes.push_back({n, n.dot(a)});
  }
  return planes;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

}  // namespace

double TactileSensor::baseline(double x_mm, double y_mm) const {
  const double dx = (x_mm - 0.5 * width_mm()) / (0.5 * width_mm());
  const double dy = (y_mm - 0.5 * height_mm()) / (0.5 * height_mm());
  return dome_mm * (1.0 - 0.25 * (dx * dx + dy * dy));
}

const char* to_string(GraspCategory c) {
  switch (c) {
    case GraspCategory::edge:
      return "edge";
    case GraspCategory::corner:
      return "corner";
    case GraspCategory::fold:
      return "fold";
    case GraspCategory::all_fabric:
      return "all_fabric";
    case GraspCategory::no_fabric:
      return "no_fabric";
  }
  return "?";
}

GraspCategory grasp_category_from_string(const std::string& s) {
  for (int k = 0; k < kGraspCategories; ++k) {
    if (s == to_string(static_cast<GraspCategory>(k))) return static_cast<GraspCategory>(k);
  }
  throw ContractError("unknown grasp category: " + s);
}

const char* to_string(PoseClass c) {
  switch (c) {
    case PoseClass::no_fabric:
      return "no_fabric";
    case PoseClass::all_fabric:
      return "all_fabric";
    case PoseClass::edge:
      return "edge";
  }
  return "?";
}

void GraspScenario::validate() const {
  if (layers != 1 && layers != 2) throw ContractError("scenario: layer count must be 1 or 2");
  if (layers == 2 && category != GraspCategory::fold) {
    throw ContractError("scenario: two layers only for fold");
  }
  if (category == GraspCategory::fold && layers != 2) {
    throw ContractError("scenario: fold requires two layers");
  }
  if (!(thickness_mm > 0.0)) throw ContractError("scenario: thickness must be positive");
  if (!(noise_scale >= 0.0)) throw ContractError("scenario: negative noise scale");
  if (!std::isfinite(cx_mm) || !std::isfinite(cy_mm) || !std::isfinite(theta_deg)) {
    throw ContractError("scenario: non-finite edge parameters");
  }
}

double normalize_theta_deg(double deg) {
  double t = std::fmod(deg, 180.0);
  if (t <= -90.0) t += 180.0;
  if (t > 90.0) t -= 180.0;
  return t;
}

GraspScenario sample_scenario(GraspCategory cat, Rng& rng, const TactileSensor& sensor) {
  GraspScenario s;
  s.category = cat;
  s.layers = cat == GraspCategory::fold ? 2 : 1;
  s.thickness_mm = uniform(rng, 0.3, 0.5);
  const double w = sensor.width_mm(), h = sensor.height_mm();
  if (cat == GraspCategory::corner) {
    s.cx_mm = uniform(rng, 0.3 * w, 0.7 * w);
    s.cy_mm = uniform(rng, 0.35 * h, 0.7 * h);
    s.theta_deg = uniform(rng, -25.0, 25.0);
  } else {
    s.cx_mm = uniform(rng, 0.3 * w, 0.7 * w);
    s.cy_mm = uniform(rng, 0.25 * h, 0.75 * h);
    s.theta_deg = uniform(rng, -35.0, 35.0);
  }
  s.seed = rng();
  return s;
}

EdgePose scenario_pose(const GraspScenario& scn, const TactileSensor& sensor) {
  EdgePose p;
  switch (scn.category) {
    case GraspCategory::no_fabric:
      p.cls = PoseClass::no_fabric;
      return p;
    case GraspCategory::all_fabric:
      p.cls = PoseClass::all_fabric;
      return p;
    default:
      break;
  }
  p.cls = PoseClass::edge;
  p.theta_deg = normalize_theta_deg(scn.theta_deg);
  const auto c = chord(Vec2(scn.cx_mm, scn.cy_mm), scn.theta_deg, sensor_region(sensor));
  const Vec2 mid = c ? c->first : Vec2(scn.cx_mm, scn.cy_mm);
  p.cx_mm = mid.x();
  p.cy_mm = mid.y();
  return p;
}

std::vector<Vec2> marker_field(double load_n, const TactileSensor& s) {
  std::vector<Vec2> m;
  const double shift = load_n / s.grip_stiffness;
  for (int j = 0; j < s.markers_y; ++j) {
    for (int i = 0; i < s.markers_x; ++i) {
      m.emplace_back((i + 0.5) * s.width_mm() / s.markers_x + shift,
                     (j + 0.5) * s.height_mm() / s.markers_y);
    }
  }
  return m;
}

std::vector<Vec2> noisy_marker_field(double load_n, std::uint64_t seed, const TactileSensor& s) {
  std::vector<Vec2> m = marker_field(load_n, s);
  if (!(s.marker_noise_mm > 0.0)) return m;
  Rng rng(derive_seed(seed, 0x3A7Cu));
  for (Vec2& p : m) p += Vec2(gaussian(rng, s.marker_noise_mm), gaussian(rng, s.marker_noise_mm));
  return m;
}

double shear_signal(const TactileFrame& current, const TactileFrame& reference) {
  if (current.markers.size() != reference.markers.size()) {
    throw ContractError("shear_signal: marker counts differ");
  }
  if (current.markers.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < current.markers.size(); ++k) {
    sum += (current.markers[k] - reference.markers[k]).norm();
  }
  return sum / static_cast<double>(current.markers.size());
}

TactileFrame synth_frame(const GraspScenario& scn, double grip_closure, const TactileSensor& s) {
  scn.validate();
  if (!(grip_closure >= 0.0 && grip_closure <= 1.0)) {
    throw ContractError("synth_frame: closure must be in [0, 1]");
  }
  TactileFrame f;
  f.depth = Raster<double>(s.width, s.height);
  f.markers = marker_field(0.0, s);
  Rng texture_rng(derive_seed(scn.seed, 0x7E47u));
  Rng noise_rng(derive_seed(scn.seed, static_cast<std::uint64_t>(std::llround(grip_closure * 1e6))));
  const double full = grip_closure * scn.layers * scn.thickness_mm * s.gain;
  for (int row = 0; row < s.height; ++row) {
    for (int col = 0; col < s.width; ++col) {
      // Draw unconditionally so texture is a fixed field of the fabric.
      const double tex = gaussian(texture_rng, 1.0);
      const double add = gaussian(noise_rng, 1.0);
      const double base = s.baseline((col + 0.5) * s.pitch_mm, (row + 0.5) * s.pitch_mm);
      const double cov = covered_fraction(scn, s, row, col);
      double d = base;
      if (cov > 0.0) {
        d += full * cov * (1.0 + scn.noise_scale * s.texture * tex);
        d += scn.noise_scale * s.noise_mm * add;
      }
      f.depth(row, col) = std::max(d, 1e-6);
    }
  }
  return f;
}

std::vector<TactileFrame> synth_sequence(const GraspScenario& scn, int n_frames,
                                         const TactileSensor& s) {
  if (n_frames < 25) throw ContractError("synth_sequence: need at least 25 frames");
  std::vector<TactileFrame> out;
  out.reserve(static_cast<std::size_t>(n_frames));
  for (int k = 0; k < n_frames; ++k) {
    const double closure = k == n_frames - 1 ? 1.0 : static_cast<double>(k) / (n_frames - 1);
    out.push_back(synth_frame(scn, closure, s));
  }
  return out;
}

Raster<double> imprint(const TactileFrame& f, const TactileSensor& s) {
  Raster<double> out(f.depth.width(), f.depth.height());
  for (int row = 0; row < f.depth.height(); ++row) {
    for (int col = 0; col < f.depth.width(); ++col) {
      const double d = f.depth(row, col);
      out(row, col) = d > 0.0 ? d - s.baseline((col + 0.5) * s.pitch_mm, (row + 0.5) * s.pitch_mm)
                              : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

double mean_imprint(const TactileFrame& f, const TactileSensor& s) {
  const Raster<double> im = imprint(f, s);
  double sum = 0.0;
  int n = 0;
  for (double v : im.data()) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

int onset_index(const std::vector<TactileFrame>& frames, const TactileSensor& s) {
  for (std::size_t k = 0; k < frames.size(); ++k) {
    if (mean_imprint(frames[k], s) > s.onset_mm) return static_cast<int>(k);
  }
  return static_cast<int>(frames.size());
}

PoseFit fit_pose(const TactileFrame& f, const TactileSensor& s) {
  PoseFit fit;
  const Raster<double> im = imprint(f, s);
  const double thr = s.imprint_threshold();
  int valid = 0, covered = 0;
  std::vector<double> covered_vals;
  for (double v : im.data()) {
    if (std::isnan(v)) continue;
    ++valid;
    if (v > thr) {
      ++covered;
      covered_vals.push_back(v);
    }
  }
  fit.coverage = valid == 0 ? 0.0 : static_cast<double>(covered) / valid;
  if (!covered_vals.empty()) {
    fit.covered_mean_mm =
        std::accumulate(covered_vals.begin(), covered_vals.end(), 0.0) / covered_vals.size();
  }

  std::vector<Vec2> pts;
  if (covered > 0 && covered < valid) {
    const double level = 0.5 * median(covered_vals);
    auto center = [&](int row, int col) {
      return Vec2((col + 0.5) * s.pitch_mm, (row + 0.5) * s.pitch_mm);
    };
    auto try_pair = [&](int r0, int c0, int r1, int c1) {
      const double a = im(r0, c0), b = im(r1, c1);
      if (std::isnan(a) || std::isnan(b)) return;
      if ((a - level) * (b - level) >= 0.0) return;
      const double t = (level - a) / (b - a);
      pts.push_back(center(r0, c0) + t * (center(r1, c1) - center(r0, c0)));
    };
    for (int row = 0; row < im.height(); ++row) {
      for (int col = 0; col < im.width(); ++col) {
        if (col + 1 < im.width()) try_pair(row, col, row, col + 1);
        if (row + 1 < im.height()) try_pair(row, col, row + 1, col);
      }
    }
  }
  fit.crossings = static_cast<int>(pts.size());

  // Total least squares, then one refit on points within 1 mm of the first line so a
  // stray texture crossing cannot tilt the edge.
  bool line_ok = false;
  Vec2 centroid = Vec2::Zero(), dir = Vec2::UnitX();
  auto tls = [&](const std::vector<Vec2>& q) {
    centroid.setZero();
    for (const Vec2& p : q) centroid += p;
    centroid /= static_cast<double>(q.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const Vec2& p : q) cov += (p - centroid) * (p - centroid).transpose();
    cov /= static_cast<double>(q.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    dir = es.eigenvectors().col(1);
    line_ok = es.eigenvalues()(1) > 1e-12;
  };
  auto distances = [&](const std::vector<Vec2>& q) {
    const Vec2 nrm(-dir.y(), dir.x());
    std::vector<double> d;
    for (const Vec2& p : q) d.push_back(std::abs((p - centroid).dot(nrm)));
    return d;
  };
  if (pts.size() >= 3) {
    tls(pts);
    const std::vector<double> d = distances(pts);
    fit.residual_mm = median(d);
    std::vector<Vec2> inliers;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      if (d[k] <= 1.0) inliers.push_back(pts[k]);
    }
    if (inliers.size() >= 3 && inliers.size() < pts.size()) {
      tls(inliers);
      pts = std::move(inliers);
    }
  }

  EdgePose& p = fit.pose;
  if (fit.coverage < kCoverageLow) {
    p.cls = PoseClass::no_fabric;
  } else if (fit.coverage > kCoverageHigh) {
    p.cls = PoseClass::all_fabric;
  } else if (!line_ok) {
    p.cls = fit.coverage >= 0.5 ? PoseClass::all_fabric : PoseClass::no_fabric;
    p.fallback = true;
  } else {
    p.cls = PoseClass::edge;
    // Center: midpoint of the fitted line inside the hull of valid pixel centers.
    std::vector<Vec2> valid_centers;
    for (int row = 0; row < im.height(); ++row) {
      for (int col = 0; col < im.width(); ++col) {
        if (!std::isnan(im(row, col))) {
          valid_centers.emplace_back((col + 0.5) * s.pitch_mm, (row + 0.5) * s.pitch_mm);
        }
      }
    }
    const auto ch = chord(centroid, rad2deg(std::atan2(dir.y(), dir.x())),
                          hull_planes(convex_hull(std::move(valid_centers))));
    const Vec2 mid = ch ? ch->first : centroid;
    p.cx_mm = mid.x();
    p.cy_mm = mid.y();
    p.theta_deg = normalize_theta_deg(rad2deg(std::atan2(dir.y(), dir.x())));
  }
  return fit;
}

EdgePose estimate_pose(const TactileFrame& f, const TactileSensor& s) { return fit_pose(f, s).pose; }

AugmentTransform sample_transform(Rng& rng, PoseClass cls, const AugmentParams& a) {
  AugmentTransform t;
  t.clip_fraction = uniform(rng, a.clip_lo, a.clip_hi);
  if (cls == PoseClass::no_fabric) return t;
  t.rotation_deg = uniform(rng, -a.max_rotation_deg, a.max_rotation_deg);
  t.tx_mm = uniform(rng, -a.max_shift_mm, a.max_shift_mm);
  t.ty_mm = uniform(rng, -a.max_shift_mm, a.max_shift_mm);
  return t;
}

double visible_chord_mm(const EdgePose& pose, const AugmentTransform& t, const TactileSensor& s) {
  const Vec2 c = forward_map(Vec2(pose.cx_mm, pose.cy_mm), t, s);
  const auto ch = chord(c, pose.theta_deg + t.rotation_deg, augmented_region(t, s));
  return ch ? ch->second : 0.0;
}

std::pair<TactileFrame, EdgePose> apply_augment(const TactileFrame& frame, const EdgePose& pose,
                                                const AugmentTransform& t, const TactileSensor& s) {
  const int w = frame.depth.width(), h = frame.depth.height();
  double dmax = 0.0;
  for (double d : frame.depth.data()) dmax = std::max(dmax, d);
  const double clip = t.clip_fraction * dmax;
  Raster<double> clipped = frame.depth;
  for (double& d : clipped.data()) d = std::min(d, clip);

  TactileFrame out;
  out.depth = Raster<double>(w, h, 0.0);
  const Vec2 c = sensor_center(s);
  const Eigen::Matrix2d rinv = rotation2(-t.rotation_deg);
  const Vec2 shift(t.tx_mm, t.ty_mm);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const Vec2 q((col + 0.5) * s.pitch_mm, (row + 0.5) * s.pitch_mm);
      const Vec2 p = rinv * (q - shift - c) + c;
      const double u = p.x() / s.pitch_mm - 0.5, v = p.y() / s.pitch_mm - 0.5;
      const int c0 = static_cast<int>(std::floor(u)), r0 = static_cast<int>(std::floor(v));
      const double fu = u - c0, fv = v - r0;
      // Exact pixel hits need only one tap per axis.
      const int c1 = fu == 0.0 ? c0 : c0 + 1, r1 = fv == 0.0 ? r0 : r0 + 1;
      if (c0 < 0 || r0 < 0 || c1 >= w || r1 >= h) continue;
      const double d00 = clipped(r0, c0), d01 = clipped(r0, c1);
      const double d10 = clipped(r1, c0), d11 = clipped(r1, c1);
      if (d00 <= 0.0 || d01 <= 0.0 || d10 <= 0.0 || d11 <= 0.0) continue;
      out.depth(row, col) = (1 - fv) * ((1 - fu) * d00 + fu * d01) + fv * ((1 - fu) * d10 + fu * d11);
    }
  }
  out.markers.reserve(frame.markers.size());
  for (const Vec2& m : frame.markers) out.markers.push_back(forward_map(m, t, s));

  EdgePose np = pose;
  if (pose.cls == PoseClass::edge) {
    const Vec2 pc = forward_map(Vec2(pose.cx_mm, pose.cy_mm), t, s);
    np.theta_deg = normalize_theta_deg(pose.theta_deg + t.rotation_deg);
    // The visible edge is the transformed line inside the valid output pixels.
    std::vector<Vec2> valid_centers;
    for (int row = 0; row < h; ++row) {
      for (int col = 0; col < w; ++col) {
        if (out.depth(row, col) > 0.0) {
          valid_centers.emplace_back((col + 0.5) * s.pitch_mm, (row + 0.5) * s.pitch_mm);
        }
      }
    }
    const auto ch = chord(pc, np.theta_deg, hull_planes(convex_hull(std::move(valid_centers))));
    const Vec2 mid = ch ? ch->first : pc;
    np.cx_mm = mid.x();
    np.cy_mm = mid.y();
  }
  return {std::move(out), np};
}

std::pair<TactileFrame, EdgePose> augment(const TactileFrame& frame, const EdgePose& pose, Rng& rng,
                                          const AugmentParams& params, const TactileSensor& s) {
  AugmentTransform t = sample_transform(rng, pose.cls, params);
  if (pose.cls == PoseClass::edge) {
    for (int tries = 0; tries < 100 && visible_chord_mm(pose, t, s) < params.min_chord_mm; ++tries) {
      t = sample_transform(rng, pose.cls, params);
    }
    if (visible_chord_mm(pose, t, s) < params.min_chord_mm) {
      t.rotation_deg = t.tx_mm = t.ty_mm = 0.0;
    }
  }
  return apply_augment(frame, pose, t, s);
}

std::vector<TactileFrame> sample_classifier_frames(const std::vector<TactileFrame>& seq) {
  const int need = (kClassifierFrames - 1) * kClassifierInterval + 1;
  if (static_cast<int>(seq.size()) < need) {
    throw ContractError("sample_classifier_frames: sequence too short");
  }
  std::vector<TactileFrame> out;
  const int last = static_cast<int>(seq.size()) - 1;
  for (int k = kClassifierFrames - 1; k >= 0; --k) {
    out.push_back(seq[static_cast<std::size_t>(last - k * kClassifierInterval)]);
  }
  return out;
}

GraspFeatures grasp_features(const std::vector<TactileFrame>& frames, const TactileSensor& s) {
  if (static_cast<int>(frames.size()) != kClassifierFrames) {
    throw ContractError("classify_grasp: expected exactly 5 frames, got " +
                        std::to_string(frames.size()));
  }
  GraspFeatures f{};
  int onset = kClassifierFrames;
  for (int k = 0; k < kClassifierFrames; ++k) {
    const PoseFit fit = fit_pose(frames[static_cast<std::size_t>(k)], s);
    const bool on = mean_imprint(frames[static_cast<std::size_t>(k)], s) > s.onset_mm;
    if (on && onset == kClassifierFrames) onset = k;
    double* row = f.data() + k * kFeaturesPerFrame;
    row[0] = fit.coverage;
    row[1] = fit.covered_mean_mm;
    row[2] = fit.residual_mm;
    row[3] = on ? 1.0 : 0.0;
  }
  f[kFeatureCount - 1] = onset;
  return f;
}

GraspClassifier::GraspClassifier() : weights_(kGraspCategories * (kFeatureCount + 1), 0.0) {
  scale_.fill(1.0);
}

namespace {

void softmax(std::array<double, kGraspCategories>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace

GraspClassifier GraspClassifier::train(const std::vector<GraspFeatures>& x,
                                       const std::vector<GraspCategory>& y,
                                       const TrainOptions& opts) {
  if (x.size() != y.size() || x.empty()) {
    throw ContractError("GraspClassifier::train: need matching, nonempty features and labels");
  }
  GraspClassifier clf;
  const std::size_t n = x.size();
  for (int j = 0; j < kFeatureCount; ++j) {
    double m = 0.0;
    for (const auto& f : x) m += f[j];
    m /= n;
    double v = 0.0;
    for (const auto& f : x) v += (f[j] - m) * (f[j] - m);
    v /= n;
    clf.mean_[j] = m;
    clf.scale_[j] = v > 1e-18 ? std::sqrt(v) : 1.0;
  }
  std::vector<std::array<double, kFeatureCount + 1>> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < kFeatureCount; ++j) z[i][j] = (x[i][j] - clf.mean_[j]) / clf.scale_[j];
    z[i][kFeatureCount] = 1.0;
  }
  constexpr int d = kFeatureCount + 1;
  std::vector<double>& w = clf.weights_;
  std::vector<double> grad(w.size());
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::array<double, kGraspCategories> p{};
      for (int k = 0; k < kGraspCategories; ++k) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += w[k * d + j] * z[i][j];
        p[k] = s;
      }
      softmax(p);
      const int yi = static_cast<int>(y[i]);
      loss -= std::log(std::max(p[yi], 1e-300));
      for (int k = 0; k < kGraspCategories; ++k) {
        const double g = p[k] - (k == yi ? 1.0 : 0.0);
        for (int j = 0; j < d; ++j) grad[k * d + j] += g * z[i][j];
      }
    }
    loss /= n;
    for (std::size_t q = 0; q < w.size(); ++q) {
      loss += 0.5 * opts.l2 * w[q] * w[q];
      w[q] -= opts.learning_rate * (grad[q] / n + opts.l2 * w[q]);
    }
    if (!std::isfinite(loss)) throw TrainingError("grasp classifier: non-finite loss", epoch);
    clf.final_loss_ = loss;
  }
  return clf;
}

GraspLabel GraspClassifier::classify(const GraspFeatures& f) const {
  constexpr int d = kFeatureCount + 1;
  std::array<double, kGraspCategories> p{};
  for (int k = 0; k < kGraspCategories; ++k) {
    double s = weights_[k * d + kFeatureCount];
    for (int j = 0; j < kFeatureCount; ++j) s += weights_[k * d + j] * (f[j] - mean_[j]) / scale_[j];
    p[k] = s;
  }
  softmax(p);
  GraspLabel label;
  label.confidence = p;
  label.category =
      static_cast<GraspCategory>(std::max_element(p.begin(), p.end()) - p.begin());
  return label;
}

GraspLabel GraspClassifier::classify(const std::vector<TactileFrame>& frames,
                                     const TactileSensor& s) const {
  return classify(grasp_features(frames, s));
}

nlohmann::json GraspClassifier::to_json() const {
  nlohmann::json doc;
  doc["format"] = "vtc.grasp_classifier";
  doc["version"] = 1;
  doc["features"] = kFeatureCount;
  doc["classes"] = nlohmann::json::array();
  for (int k = 0; k < kGraspCategories; ++k) {
    doc["classes"].push_back(to_string(static_cast<GraspCategory>(k)));
  }
  doc["mean"] = mean_;
  doc["scale"] = scale_;
  doc["weights"] = weights_;
  doc["final_loss"] = final_loss_;
  return doc;
}

GraspClassifier GraspClassifier::from_json(const nlohmann::json& doc) {
  GraspClassifier clf;
  try {
    if (doc.at("format").get<std::string>() != "vtc.grasp_classifier") {
      throw ContractError("classifier weights: unexpected format tag");
    }
    if (doc.at("version").get<int>() != 1 || doc.at("features").get<int>() != kFeatureCount) {
      throw ContractError("classifier weights: unsupported version or feature count");
    }
    clf.mean_ = doc.at("mean").get<std::array<double, kFeatureCount>>();
    clf.scale_ = doc.at("scale").get<std::array<double, kFeatureCount>>();
    clf.weights_ = doc.at("weights").get<std::vector<double>>();
    clf.final_loss_ = doc.value("final_loss", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("classifier weights: ") + e.what());
  }
  if (clf.weights_.size() != static_cast<std::size_t>(kGraspCategories * (kFeatureCount + 1))) {
    throw ContractError("classifier weights: wrong parameter count");
  }
  return clf;
}

void GraspClassifier::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << to_json().dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

GraspClassifier GraspClassifier::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open classifier weights: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("classifier weights: ") + e.what());
  }
  return from_json(doc);
}

namespace {

PoseClass pose_class_of(GraspCategory c) {
  switch (c) {
    case GraspCategory::no_fabric:
      return PoseClass::no_fabric;
    case GraspCategory::all_fabric:
      return PoseClass::all_fabric;
    default:
      return PoseClass::edge;
  }
}

}  // namespace

LabeledFeatures make_grasp_features(const TactileDatasetOptions& opts, std::uint64_t seed,
                                    const TactileSensor& s) {
  if (opts.raw_per_category < 1 || opts.augment_per_raw < 0) {
    throw ContractError("make_grasp_features: bad sample counts");
  }
  LabeledFeatures out;
  for (int k = 0; k < kGraspCategories; ++k) {
    const auto cat = static_cast<GraspCategory>(k);
    Rng rng(derive_seed(seed, 0x7AC0u + static_cast<std::uint64_t>(k)));
    for (int i = 0; i < opts.raw_per_category; ++i) {
      const GraspScenario scn = sample_scenario(cat, rng, s);
      const auto frames = sample_classifier_frames(synth_sequence(scn, opts.n_frames, s));
      out.x.push_back(grasp_features(frames, s));
      out.y.push_back(cat);
      const EdgePose pose = scenario_pose(scn, s);
      for (int a = 0; a < opts.augment_per_raw; ++a) {
        AugmentTransform t = sample_transform(rng, pose_class_of(cat), opts.augment);
        if (pose.cls == PoseClass::edge) {
          for (int tries = 0; tries < 100 && visible_chord_mm(pose, t, s) < opts.augment.min_chord_mm;
               ++tries) {
            t = sample_transform(rng, pose.cls, opts.augment);
          }
        }
        std::vector<TactileFrame> aug;
        for (const TactileFrame& f : frames) aug.push_back(apply_augment(f, pose, t, s).first);
        out.x.push_back(grasp_features(aug, s));
        out.y.push_back(cat);
      }
    }
  }
  return out;
}

ClassifierReport evaluate_classifier(const GraspClassifier& clf, const LabeledFeatures& data) {
  ClassifierReport r;
  if (data.x.empty()) return r;
  int correct = 0, binary_correct = 0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const GraspCategory pred = clf.classify(data.x[i]).category;
    const GraspCategory truth = data.y[i];
    r.confusion[static_cast<int>(truth)][static_cast<int>(pred)]++;
    correct += pred == truth ? 1 : 0;
    binary_correct += (pred == GraspCategory::edge) == (truth == GraspCategory::edge) ? 1 : 0;
  }
  r.accuracy = static_cast<double>(correct) / data.x.size();
  r.non_edge_binary_accuracy = static_cast<double>(binary_correct) / data.x.size();
  return r;
}

GraspLabel classify_scenario(const GraspClassifier& clf, const GraspScenario& scn,
                             const TactileSensor& s) {
  return clf.classify(sample_classifier_frames(synth_sequence(scn, 25, s)), s);
}

void write_tactile_frame(const std::filesystem::path& pgm_path, const TactileFrame& f) {
  write_pgm16(pgm_path, quantize16(f.depth, 1e-4));
}

void write_features_csv(const std::filesystem::path& path, const LabeledFeatures& data) {
  if (data.x.size() != data.y.size()) throw ContractError("write_features_csv: size mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "category";
  for (int i = 0; i < kFeatureCount; ++i) out << ",f" << i;
  out << '\n';
  char buf[32];
  for (std::size_t n = 0; n < data.x.size(); ++n) {
    out << to_string(data.y[n]);
    for (double v : data.x[n]) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

LabeledFeatures read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  LabeledFeatures data;
  std::string line;
  std::getline(in, line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    data.y.push_back(grasp_category_from_string(cell));
    GraspFeatures f{};
    for (int i = 0; i < kFeatureCount; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": too few columns");
      }
      try {
        f[static_cast<std::size_t>(i)] = std::stod(cell);
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    data.x.push_back(f);
  }
  return data;
}

nlohmann::json pose_to_json(const EdgePose& p) {
  return {{"class", to_string(p.cls)},
          {"cx_mm", p.cx_mm},
          {"cy_mm", p.cy_mm},
          {"theta_deg", p.theta_deg},
          {"fallback", p.fallback}};
}

nlohmann::json scenario_to_json(const GraspScenario& s) {
  return {{"category", to_string(s.category)}, {"cx_mm", s.cx_mm},
          {"cy_mm", s.cy_mm},                   {"theta_deg", s.theta_deg},
          {"layers", s.layers},                 {"thickness_mm", s.thickness_mm},
          {"seed", s.seed},                     {"noise_scale", s.noise_scale}};
}

}  // namespace vtc
