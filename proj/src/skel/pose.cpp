// SPDX-License-Identifier: Apache-2.0
#include "skel/pose.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "common/error.hpp"

namespace gk::skel {

PoseSequence read_pose_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file: " + path.string());
  PoseSequence seq;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("frame") || !j.contains("keypoints") || !j["frame"].is_number_integer())
      throw DataError(where + ": expected {\"frame\": int, \"keypoints\": [...]}");
    const auto& kps = j["keypoints"];
    if (!kps.is_array() || kps.size() != kNumJoints)
      throw DataError(where + ": expected exactly 17 keypoints");
    PoseFrame f;
    f.frame = j["frame"].get<long>();
    for (std::size_t k = 0; k < kNumJoints; ++k) {
      const auto& kp = kps[k];
      if (!kp.is_array() || kp.size() != 3 || !kp[0].is_number() || !kp[1].is_number() || !kp[2].is_number())
        throw DataError(where + ": keypoint " + std::to_string(k) + " must be [x, y, c]");
      f.keypoints[k] = {kp[0].get<double>(), kp[1].get<double>(), kp[2].get<double>()};
      const auto& p = f.keypoints[k];
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError(where + ": non-finite coordinate");
      if (!(p.c >= 0.0 && p.c <= 1.0)) throw DataError(where + ": confidence outside [0, 1]");
    }
    seq.push_back(f);
  }
  return seq;
}

void write_pose_jsonl(const std::filesystem::path& path, const PoseSequence& seq) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write pose file: " + path.string());
  for (const auto& f : seq) {
    nlohmann::json kps = nlohmann::json::array();
    for (const auto& p : f.keypoints) kps.push_back({p.x, p.y, p.c});
    out << nlohmann::json{{"frame", f.frame}, {"keypoints", kps}}.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gk::skel
