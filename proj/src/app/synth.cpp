// SPDX-License-Identifier: Apache-2.0
#include "app/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "common/error.hpp"
#include "skel/skelmap.hpp"

namespace gk::app {
namespace fs = std::filesystem;
using skel::Joint;
using skel::Keypoint;
using skel::PoseFrame;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::mt19937_64 rng_for(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
  return std::mt19937_64(seq);
}

struct Vec3 {
  double f, l, v;  // forward, lateral, down
};
Vec3 operator+(Vec3 a, Vec3 b) { return {a.f + b.f, a.l + b.l, a.v + b.v}; }
Vec3 dir(double len, double angle) { return {len * std::sin(angle), 0.0, len * std::cos(angle)}; }

double body_px(const Camera& cam, const SyntheticSpec& s) {
  return 0.78 * static_cast<double>(s.image_height) * cam.scale;
}

struct Segment {
  skel::Point a, b;
  double radius;
};

std::vector<Segment> body_segments(const PoseFrame& p, const WalkerParams& w, const Camera& cam,
                                   const SyntheticSpec& s) {
  const double H = body_px(cam, s), t = w.thickness;
  auto pt = [&](Joint j) { return skel::Point{p.keypoints[j].x, p.keypoints[j].y}; };
  auto mid = [&](Joint a, Joint b) {
    return skel::Point{(p.keypoints[a].x + p.keypoints[b].x) / 2, (p.keypoints[a].y + p.keypoints[b].y) / 2};
  };
  const auto hip = mid(Joint::kLeftHip, Joint::kRightHip), sh = mid(Joint::kLeftShoulder, Joint::kRightShoulder);
  std::vector<Segment> segs{
      {hip, sh, 0.085 * H * t},
      {pt(Joint::kLeftHip), pt(Joint::kRightHip), 0.06 * H * t},
      {pt(Joint::kLeftShoulder), pt(Joint::kRightShoulder), 0.05 * H * t},
      {sh, pt(Joint::kNose), 0.03 * H * t},
      {pt(Joint::kNose), mid(Joint::kLeftEar, Joint::kRightEar), w.head * H * 0.42},
  };
  const std::array<std::array<Joint, 3>, 2> legs{{{Joint::kLeftHip, Joint::kLeftKnee, Joint::kLeftAnkle},
                                                  {Joint::kRightHip, Joint::kRightKnee, Joint::kRightAnkle}}};
  for (const auto& l : legs) {
    segs.push_back({pt(l[0]), pt(l[1]), 0.055 * H * t});
    segs.push_back({pt(l[1]), pt(l[2]), 0.04 * H * t});
  }
  const std::array<std::array<Joint, 3>, 2> arms{
      {{Joint::kLeftShoulder, Joint::kLeftElbow, Joint::kLeftWrist},
       {Joint::kRightShoulder, Joint::kRightElbow, Joint::kRightWrist}}};
  for (const auto& a : arms) {
    segs.push_back({pt(a[0]), pt(a[1]), 0.035 * H * t});
    segs.push_back({pt(a[1]), pt(a[2]), 0.028 * H * t});
  }
  return segs;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (identities == 0 || sequences == 0 || frames == 0 || views == 0)
    throw ArgumentError("synthetic counts must be positive");
  if (modality != "silhouette" && modality != "pose" && modality != "both")
    throw ArgumentError("synthetic modality must be silhouette, pose or both");
  if (!(noise >= 0) || noise > 0.2) throw ArgumentError("synthetic noise must lie in [0, 0.2]");
  if (image_height < 32 || image_width < 16) throw ArgumentError("synthetic image is too small");
}

SyntheticSpec synth_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"schema_version", "identities", "sequences",    "frames",     "views",
                                           "modality",       "noise",      "seed",         "image_height", "image_width"};
  if (!j.is_object()) throw ArgumentError("synthetic spec must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw ArgumentError("unknown synthetic spec key '" + k + "'");
  SyntheticSpec s;
  try {
    if (j.value("schema_version", 1) != 1) throw ArgumentError("unsupported synthetic spec schema_version");
    s.identities = j.value("identities", s.identities);
    s.sequences = j.value("sequences", s.sequences);
    s.frames = j.value("frames", s.frames);
    s.views = j.value("views", s.views);
    s.modality = j.value("modality", s.modality);
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
    s.image_height = j.value("image_height", s.image_height);
    s.image_width = j.value("image_width", s.image_width);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("malformed synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"schema_version", 1}, {"identities", s.identities}, {"sequences", s.sequences},
          {"frames", s.frames},  {"views", s.views},           {"modality", s.modality},
          {"noise", s.noise},    {"seed", s.seed},             {"image_height", s.image_height},
          {"image_width", s.image_width}};
}

std::vector<WalkerParams> identity_params(const SyntheticSpec& spec) {
  struct Range {
    double WalkerParams::*field;
    double lo, hi;
  };
  const std::array<Range, 12> ranges{{{&WalkerParams::leg, 0.42, 0.56},
                                      {&WalkerParams::thigh_share, 0.42, 0.58},
                                      {&WalkerParams::head, 0.10, 0.16},
                                      {&WalkerParams::shoulder, 0.08, 0.18},
                                      {&WalkerParams::stride_deg, 12, 38},
                                      {&WalkerParams::knee_deg, 8, 50},
                                      {&WalkerParams::arm_deg, 4, 40},
                                      {&WalkerParams::elbow_deg, 5, 45},
                                      {&WalkerParams::lean_deg, -10, 10},
                                      {&WalkerParams::period, 14, 30},
                                      {&WalkerParams::bob, 0.0, 0.03},
                                      {&WalkerParams::thickness, 0.7, 1.4}}};
  const std::size_t n = spec.identities;
  std::vector<WalkerParams> out(n);
  auto rng = rng_for(spec.seed, 0xB0D1E5u, 0, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& r : ranges) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i-- > 1;) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(perm[i], perm[pick(rng)]);
    }
    for (std::size_t i = 0; i < n; ++i)
      out[i].*r.field = r.lo + (r.hi - r.lo) * (static_cast<double>(perm[i]) + u(rng)) / static_cast<double>(n);
  }
  for (auto& w : out) w.torso = std::max(0.2, 1.0 - w.leg - w.head - 0.05);
  return out;
}

PoseFrame walker_pose(const WalkerParams& w, const Camera& cam, double t, const SyntheticSpec& spec) {
  const double H = body_px(cam, spec);
  const double ph = 2 * std::numbers::pi * t / w.period;
  const double thigh = w.leg * w.thigh_share * H, shin = w.leg * (1 - w.thigh_share) * H;
  const double upper_arm = 0.17 * H, fore_arm = 0.15 * H;
  const Vec3 hip{0.0, 0.0, -w.leg * H + w.bob * H * std::cos(2 * ph)};
  const double half_hip = 0.35 * w.shoulder * H, half_sh = 0.5 * w.shoulder * H;

  std::array<Vec3, skel::kNumJoints> j{};
  auto leg = [&](Joint hj, Joint kj, Joint aj, double side, double phase) {
    const double th = w.stride_deg * kDeg * std::sin(phase);
    const double bend = w.knee_deg * kDeg * (0.5 + 0.5 * std::sin(phase + 1.2));
    j[hj] = hip + Vec3{0, side * half_hip, 0};
    j[kj] = j[hj] + dir(thigh, th);
    j[aj] = j[kj] + dir(shin, th - bend);
  };
  leg(Joint::kLeftHip, Joint::kLeftKnee, Joint::kLeftAnkle, -1, ph);
  leg(Joint::kRightHip, Joint::kRightKnee, Joint::kRightAnkle, 1, ph + std::numbers::pi);

  const double lean = w.lean_deg * kDeg;
  const Vec3 neck = hip + Vec3{w.torso * H * std::sin(lean), 0, -w.torso * H * std::cos(lean)};
  auto arm = [&](Joint sj, Joint ej, Joint wj, double side, double phase) {
    const double a = -w.arm_deg * kDeg * std::sin(phase);
    const double e = w.elbow_deg * kDeg * (0.6 + 0.4 * std::sin(phase));
    j[sj] = neck + Vec3{0, side * half_sh, 0};
    // dir() measures from straight down, so these angles hang the arm
    j[ej] = j[sj] + dir(upper_arm, a);
    j[wj] = j[ej] + dir(fore_arm, a + e);
  };
  arm(Joint::kLeftShoulder, Joint::kLeftElbow, Joint::kLeftWrist, -1, ph);
  arm(Joint::kRightShoulder, Joint::kRightElbow, Joint::kRightWrist, 1, ph + std::numbers::pi);

  const double hr = w.head * H;
  const Vec3 head = neck + Vec3{0.1 * hr, 0, -(0.5 * hr + 0.04 * H)};
  j[Joint::kNose] = head + Vec3{0.45 * hr, 0, 0.1 * hr};
  j[Joint::kLeftEye] = head + Vec3{0.35 * hr, -0.15 * hr, -0.1 * hr};
  j[Joint::kRightEye] = head + Vec3{0.35 * hr, 0.15 * hr, -0.1 * hr};
  j[Joint::kLeftEar] = head + Vec3{-0.05 * hr, -0.4 * hr, 0};
  j[Joint::kRightEar] = head + Vec3{-0.05 * hr, 0.4 * hr, 0};

  const double yaw = cam.yaw_deg * kDeg;
  const double cx = static_cast<double>(spec.image_width) / 2 + cam.dx;
  const double ground = 0.92 * static_cast<double>(spec.image_height) + cam.dy;
  PoseFrame out;
  out.frame = 0;
  for (std::size_t k = 0; k < skel::kNumJoints; ++k)
    out.keypoints[k] = Keypoint{cx + j[k].f * std::sin(yaw) + j[k].l * std::cos(yaw), ground + j[k].v, 1.0};
  return out;
}

prep::GrayImage draw_silhouette(const PoseFrame& pose, const WalkerParams& w, const Camera& cam,
                                const SyntheticSpec& spec) {
  const auto segs = body_segments(pose, w, cam, spec);
  prep::GrayImage img(spec.image_height, spec.image_width, 0);
  for (const auto& s : segs) {
    const double x0 = std::min(s.a.x, s.b.x) - s.radius, x1 = std::max(s.a.x, s.b.x) + s.radius;
    const double y0 = std::min(s.a.y, s.b.y) - s.radius, y1 = std::max(s.a.y, s.b.y) + s.radius;
    const long c0 = std::max(0L, static_cast<long>(std::floor(x0))),
               c1 = std::min(static_cast<long>(spec.image_width) - 1, static_cast<long>(std::ceil(x1)));
    const long r0 = std::max(0L, static_cast<long>(std::floor(y0))),
               r1 = std::min(static_cast<long>(spec.image_height) - 1, static_cast<long>(std::ceil(y1)));
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c)
        if (skel::point_segment_distance({static_cast<double>(c), static_cast<double>(r)}, s.a, s.b) <= s.radius)
          img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = 255;
  }
  return img;
}

std::string subject_name(std::size_t id) {
  char b[16];
  std::snprintf(b, sizeof b, "s%03zu", id);
  return b;
}
std::string condition_name(std::size_t seq) {
  char b[16];
  std::snprintf(b, sizeof b, "seq-%02zu", seq);
  return b;
}
std::string view_name(std::size_t view) {
  char b[16];
  std::snprintf(b, sizeof b, "v%03zu", view);
  return b;
}

SequenceDraw sequence_draw(const SyntheticSpec& spec, std::size_t id, std::size_t seq, std::size_t view) {
  auto rng = rng_for(spec.seed, id + 1, seq + 1, view + 1);
  SequenceDraw d;
  d.phase = std::uniform_int_distribution<long>(0, 999)(rng);
  d.camera.yaw_deg = spec.views == 1 ? 90.0 : 18.0 + 144.0 * static_cast<double>(view) / static_cast<double>(spec.views - 1);
  if (spec.noise > 0) {
    std::normal_distribution<double> g(0.0, 1.0);
    d.camera.scale = std::clamp(1.0 + 2 * spec.noise * g(rng), 0.8, 1.1);
    d.camera.dx = 20 * spec.noise * g(rng) * static_cast<double>(spec.image_width) / 88.0;
    d.camera.dy = std::clamp(10 * spec.noise * g(rng), -4.0, 4.0);
  }
  return d;
}

skel::PoseSequence synth_pose_sequence(const SyntheticSpec& spec, const std::vector<WalkerParams>& ids,
                                       std::size_t id, std::size_t seq, std::size_t view) {
  const auto d = sequence_draw(spec, id, seq, view);
  auto rng = rng_for(spec.seed ^ 0x5EEDF00Du, id + 1, seq + 1, view + 1);
  std::normal_distribution<double> g(0.0, 1.0);
  const double H = body_px(d.camera, spec);
  skel::PoseSequence out;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    PoseFrame p = walker_pose(ids[id], d.camera, static_cast<double>(d.phase) + static_cast<double>(t), spec);
    p.frame = static_cast<long>(t);
    if (spec.noise > 0)
      for (auto& k : p.keypoints) {
        k.x += spec.noise * H * g(rng);
        k.y += spec.noise * H * g(rng);
        k.c = std::clamp(1.0 - std::abs(5 * spec.noise * g(rng)), 0.05, 1.0);
      }
    out.push_back(p);
  }
  return out;
}

void generate_synth(const SyntheticSpec& spec, const fs::path& out) {
  spec.validate();
  const auto ids = identity_params(spec);
  const bool poses = spec.modality != "silhouette", sils = spec.modality != "pose";
  for (std::size_t id = 0; id < spec.identities; ++id)
    for (std::size_t seq = 0; seq < spec.sequences; ++seq)
      for (std::size_t v = 0; v < spec.views; ++v) {
        const auto dir = fs::path(subject_name(id)) / condition_name(seq);
        if (poses) {
          fs::create_directories(out / "poses" / dir);
          skel::write_pose_jsonl(out / "poses" / dir / (view_name(v) + ".jsonl"),
                                 synth_pose_sequence(spec, ids, id, seq, v));
        }
        if (sils) {
          const auto d = sequence_draw(spec, id, seq, v);
          const auto sdir = out / "sils" / dir / view_name(v);
          fs::create_directories(sdir);
          for (std::size_t t = 0; t < spec.frames; ++t) {
            const auto p = walker_pose(ids[id], d.camera, static_cast<double>(d.phase) + static_cast<double>(t), spec);
            char name[32];
            std::snprintf(name, sizeof name, "frame-%04zu.pgm", t);
            prep::write_pgm(sdir / name, draw_silhouette(p, ids[id], d.camera, spec));
          }
        }
      }
  fs::create_directories(out);
  std::ofstream f(out / "spec.json", std::ios::trunc);
  if (!f) throw IoError("cannot write " + (out / "spec.json").string());
  f << to_json(spec).dump(1) << '\n';
}

}  // namespace gk::app
