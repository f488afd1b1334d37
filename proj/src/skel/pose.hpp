// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace gk::skel {

constexpr std::size_t kNumJoints = 17;

// COCO-17 order, 0-based.
enum Joint : std::size_t {
  kNose = 0,
  kLeftEye,
  kRightEye,
  kLeftEar,
  kRightEar,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
  kLeftHip,
  kRightHip,
  kLeftKnee,
  kRightKnee,
  kLeftAnkle,
  kRightAnkle,
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double c = 0.0;  // confidence in [0, 1]
};

struct PoseFrame {
  long frame = 0;
  std::array<Keypoint, kNumJoints> keypoints{};
};

using PoseSequence = std::vector<PoseFrame>;

// JSON Lines: {"frame": int, "keypoints": [[x, y, c] x 17]} per line.
// Throws DataError naming the offending line on malformed input.
PoseSequence read_pose_jsonl(const std::filesystem::path& path);
void write_pose_jsonl(const std::filesystem::path& path, const PoseSequence& seq);

}  // namespace gk::skel
