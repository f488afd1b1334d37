// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "prep/image.hpp"
#include "skel/pose.hpp"

namespace gk::app {

struct SyntheticSpec {
  std::size_t identities = 8;
  std::size_t sequences = 6;  // per identity and view
  std::size_t frames = 40;
  std::size_t views = 1;
  std::string modality = "both";  // silhouette, pose or both
  double noise = 0.0;             // 0 = noiseless, same camera for every sequence
  std::uint64_t seed = 0;
  std::size_t image_height = 128;
  std::size_t image_width = 88;

  void validate() const;
};

// Rejects unknown keys.
SyntheticSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticSpec& s);

// Body and gait parameters of one walker; lengths are fractions of body height.
struct WalkerParams {
  double leg = 0.5, thigh_share = 0.5, torso = 0.3, head = 0.12, shoulder = 0.1;
  double stride_deg = 25, knee_deg = 30, arm_deg = 20, elbow_deg = 20, lean_deg = 0;
  double period = 20;  // frames per gait cycle
  double bob = 0.01;
  double thickness = 1.0;
};

// Parameters of all identities, spread by a Latin-hypercube draw so that every
// pair of identities differs along each axis.
std::vector<WalkerParams> identity_params(const SyntheticSpec& spec);

// Camera placement of one sequence (identical for all sequences when noise is 0).
struct Camera {
  double scale = 1.0;  // body height in pixels = 0.78 * image_height * scale
  double dx = 0.0, dy = 0.0;
  double yaw_deg = 90.0;
};

// Noise-free pose at continuous time t (frames).
skel::PoseFrame walker_pose(const WalkerParams& w, const Camera& cam, double t, const SyntheticSpec& spec);

// Capsule rendering of the limbs plus a head disc; foreground 255.
prep::GrayImage draw_silhouette(const skel::PoseFrame& pose, const WalkerParams& w, const Camera& cam,
                                const SyntheticSpec& spec);

std::string subject_name(std::size_t id);
std::string condition_name(std::size_t seq);
std::string view_name(std::size_t view);

struct SequenceDraw {
  long phase = 0;  // integer frame offset into the gait cycle
  Camera camera;
};

// Deterministic per-(identity, sequence, view) draw.
SequenceDraw sequence_draw(const SyntheticSpec& spec, std::size_t id, std::size_t seq, std::size_t view);

// Keypoints of one sequence including noise.
skel::PoseSequence synth_pose_sequence(const SyntheticSpec& spec, const std::vector<WalkerParams>& ids,
                                       std::size_t id, std::size_t seq, std::size_t view);

// Writes poses/<subject>/<condition>/<view>.jsonl and
// sils/<subject>/<condition>/<view>/frame-NNNN.pgm plus spec.json.
void generate_synth(const SyntheticSpec& spec, const std::filesystem::path& out);

}  // namespace gk::app
