#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "wildface/wildface.hpp"

namespace wildface::testing {

/// Skeleton with every joint at `score`, shoulders and hips placed explicitly.
inline PoseSkeleton torso(std::string id, Point ls, Point rs, Point lh, Point rh, double score = 0.9) {
  PoseSkeleton s;
  s.image_id = std::move(id);
  for (auto& k : s.keypoints) k = {0.5 * (ls.x + rs.x), 0.5 * (ls.y + lh.y), score};
  s[Joint::left_shoulder] = {ls.x, ls.y, score};
  s[Joint::right_shoulder] = {rs.x, rs.y, score};
  s[Joint::left_hip] = {lh.x, lh.y, score};
  s[Joint::right_hip] = {rh.x, rh.y, score};
  return s;
}

inline PoseSkeleton with_ears(PoseSkeleton s, Point le, Point re, double score = 0.9) {
  s[Joint::left_ear] = {le.x, le.y, score};
  s[Joint::right_ear] = {re.x, re.y, score};
  return s;
}

inline PoseSkeleton random_skeleton(std::mt19937_64& rng, const std::string& id = "r") {
  std::uniform_real_distribution<double> pos(0.0, 200.0);
  std::uniform_real_distribution<double> conf(0.2, 1.0);
  PoseSkeleton s;
  s.image_id = id;
  for (auto& k : s.keypoints) k = {pos(rng), pos(rng), conf(rng)};
  return s;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  os << content;
}

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

/// Runs a shell command, capturing stdout; stderr is discarded.
inline CommandResult run(const std::string& cmd) {
  CommandResult r;
  FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("wildface_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace wildface::testing
