#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ft/edges.hpp"
#include "ft/tensor.hpp"

namespace ft {

// Joint order used everywhere: 5 fingertips then palm, xyz in millimeters.
inline constexpr std::array<const char*, 6> kJointNames = {
    "thumb", "index", "middle", "ring", "pinky", "palm"};
inline constexpr int kNumJoints = 6;
inline constexpr int kTargetDim = 18;
inline constexpr int kCropSize = 96;

struct JointSet {
  std::array<std::array<float, 3>, kNumJoints> positions{};
  bool has_palm = true;
};

struct CropMeta {
  std::array<float, 3> center{0.f, 0.f, 0.f};  // mm, camera frame
  float cube_size = 300.f;                     // mm
  std::uint32_t frame_id = 0;                  // in-memory only
};

// Orthographic depth raster: pixel pitch mm_per_px, world origin at the
// image center, x right / y down, values are depth in mm, 0 = missing.
struct DepthFrame {
  int width = 0;
  int height = 0;
  float mm_per_px = 1.f;
  std::vector<float> depth_mm;

  float& at(int y, int x) { return depth_mm[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return depth_mm[static_cast<std::size_t>(y) * width + x]; }
};

struct Sample {
  Tensor depth;  // [1,1,96,96] in [-1,1]
  Tensor edge;   // [1,1,96,96] in [0,1]; empty when has_edge is false
  bool has_edge = false;
  std::array<float, kTargetDim> target_mm{};  // 6 joints x xyz
  CropMeta meta;
};

// Resamples the cube_size window around meta.center to a 96x96 crop with
// depth normalized to [-1,1]; missing depth maps to +1 (background).
Tensor crop_and_normalize(const DepthFrame& frame, const CropMeta& meta);

// Per-axis (p - center)/(cube_size/2) in the fixed joint order. Joints more
// than cube_size from the center are clamped; *clamped reports it.
std::vector<float> normalize_joints(const JointSet& j, const CropMeta& meta,
                                    bool* clamped = nullptr);
JointSet denormalize_joints(const std::vector<float>& v, const CropMeta& meta);

JointSet joints_from_mm(const std::array<float, kTargetDim>& mm);
std::array<float, kTargetDim> joints_to_mm(const JointSet& j);

// --- synthetic depth hands -------------------------------------------------

struct SynthConfig {
  int frame_size = 160;
  float mm_per_px = 2.5f;
  float cube_size = 300.f;
  float center_depth = 500.f;  // mean palm depth, mm
  float palm_radius = 40.f;
  float palm_radius_jitter = 5.f;
  float palm_offset_jitter = 15.f;  // lateral palm placement, mm
  float finger_length = 70.f;
  float finger_length_jitter = 12.f;
  float finger_radius = 7.f;
  float spread_deg = 16.f;  // angular gap between adjacent fingers
  float spread_jitter_deg = 5.f;
  float hand_angle_jitter_deg = 20.f;  // whole-hand rotation
  float depth_jitter = 25.f;           // palm depth variation, mm
  float tip_drop = 25.f;               // fingertip lift toward the camera, mm
  bool with_edges = true;
  EdgeConfig edge;
};

// n rendered hands (palm disk + five capsule fingers), deterministic in
// (seed, n, config). Ground-truth fingertips lie on the rendered surface.
std::vector<Sample> synth_samples(std::uint64_t seed, int n,
                                  const SynthConfig& config = {});
void synth_generate(std::uint64_t seed, int n, const SynthConfig& config,
                    const std::string& out_path);

// --- FTDS container ----------------------------------------------------------

class DatasetWriter {
 public:
  DatasetWriter(const std::string& path, std::uint32_t count,
                int h = kCropSize, int w = kCropSize);
  ~DatasetWriter();
  void append(const Sample& s);
  void close();

 private:
  std::ofstream os_;
  std::string path_;
  std::uint32_t expected_;
  std::uint32_t written_ = 0;
  bool closed_ = false;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);
  std::uint32_t size() const { return count_; }
  int height() const { return h_; }
  int width() const { return w_; }
  bool next(Sample& out);  // false once exhausted

 private:
  std::ifstream is_;
  std::string path_;
  std::uint32_t count_ = 0;
  std::uint32_t index_ = 0;
  int h_ = 0, w_ = 0;
};

std::vector<Sample> read_dataset(const std::string& path);
void write_dataset(const std::string& path, const std::vector<Sample>& samples);

}  // namespace ft
