#include "ft/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ft/binio.hpp"
#include "ft/rng.hpp"

namespace ft {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

// Bilinear depth lookup; missing (0) neighbors or out-of-frame samples
// poison the result so holes never imitate near surfaces.
float sample_depth(const DepthFrame& f, float u, float v) {
  int x0 = static_cast<int>(std::floor(u));
  int y0 = static_cast<int>(std::floor(v));
  if (x0 < 0 || y0 < 0 || x0 + 1 >= f.width || y0 + 1 >= f.height) return 0.f;
  float d00 = f.at(y0, x0), d01 = f.at(y0, x0 + 1);
  float d10 = f.at(y0 + 1, x0), d11 = f.at(y0 + 1, x0 + 1);
  if (d00 == 0.f || d01 == 0.f || d10 == 0.f || d11 == 0.f) return 0.f;
  float fx = u - x0, fy = v - y0;
  return (1 - fy) * ((1 - fx) * d00 + fx * d01) +
         fy * ((1 - fx) * d10 + fx * d11);
}

}  // namespace

Tensor crop_and_normalize(const DepthFrame& frame, const CropMeta& meta) {
  if (meta.cube_size <= 0.f)
    throw std::invalid_argument("crop: cube_size must be positive");
  if (frame.width < 2 || frame.height < 2 ||
      static_cast<std::size_t>(frame.width) * frame.height != frame.depth_mm.size())
    throw std::invalid_argument("crop: malformed depth frame");

  const float half = meta.cube_size / 2.f;
  const float cu = (frame.width - 1) / 2.f + meta.center[0] / frame.mm_per_px;
  const float cv = (frame.height - 1) / 2.f + meta.center[1] / frame.mm_per_px;
  const float half_px = half / frame.mm_per_px;
  if (cu + half_px < 0 || cu - half_px > frame.width - 1 || cv + half_px < 0 ||
      cv - half_px > frame.height - 1)
    throw std::invalid_argument("crop: window does not intersect the frame");

  Tensor out({1, 1, kCropSize, kCropSize});
  for (int y = 0; y < kCropSize; ++y) {
    float ty = (y + 0.5f) / kCropSize * 2.f - 1.f;
    for (int x = 0; x < kCropSize; ++x) {
      float tx = (x + 0.5f) / kCropSize * 2.f - 1.f;
      float d = sample_depth(frame, cu + tx * half_px, cv + ty * half_px);
      float v = (d == 0.f) ? 1.f
                           : std::clamp((d - meta.center[2]) / half, -1.f, 1.f);
      out.at(0, 0, y, x) = v;
    }
  }
  return out;
}

std::vector<float> normalize_joints(const JointSet& j, const CropMeta& meta,
                                    bool* clamped) {
  const float half = meta.cube_size / 2.f;
  if (clamped) *clamped = false;
  std::vector<float> v;
  v.reserve(kTargetDim);
  int n = j.has_palm ? kNumJoints : kNumJoints - 1;
  for (int k = 0; k < n; ++k) {
    for (int a = 0; a < 3; ++a) {
      float p = j.positions[k][a];
      if (!std::isfinite(p))
        throw std::invalid_argument(std::string("normalize_joints: non-finite ") +
                                    kJointNames[k] + " coordinate");
      float t = (p - meta.center[a]) / half;
      if (t < -2.f || t > 2.f) {  // beyond +-cube_size of the center
        t = std::clamp(t, -2.f, 2.f);
        if (clamped) *clamped = true;
      }
      v.push_back(t);
    }
  }
  return v;
}

JointSet denormalize_joints(const std::vector<float>& v, const CropMeta& meta) {
  if (v.size() != kTargetDim && v.size() != kTargetDim - 3)
    throw std::invalid_argument("denormalize_joints: expected 18 or 15 values, got " +
                                std::to_string(v.size()));
  JointSet j;
  j.has_palm = v.size() == kTargetDim;
  const float half = meta.cube_size / 2.f;
  for (std::size_t k = 0; k < v.size() / 3; ++k)
    for (int a = 0; a < 3; ++a)
      j.positions[k][a] = v[k * 3 + a] * half + meta.center[a];
  return j;
}

JointSet joints_from_mm(const std::array<float, kTargetDim>& mm) {
  JointSet j;
  for (int k = 0; k < kNumJoints; ++k)
    for (int a = 0; a < 3; ++a) j.positions[k][a] = mm[k * 3 + a];
  return j;
}

std::array<float, kTargetDim> joints_to_mm(const JointSet& j) {
  std::array<float, kTargetDim> mm{};
  for (int k = 0; k < kNumJoints; ++k)
    for (int a = 0; a < 3; ++a) mm[k * 3 + a] = j.positions[k][a];
  return mm;
}

// --- synthetic hands ---------------------------------------------------------

namespace {

struct Capsule {
  float x0, y0, z0;
  float x1, y1, z1;
  float r;
};

struct Hand {
  float palm_x, palm_y, palm_z, palm_r;
  std::array<Capsule, 5> fingers;
  std::array<float, kTargetDim> target_mm;
};

Hand make_hand(Rng& rng, const SynthConfig& c) {
  Hand h{};
  h.palm_x = static_cast<float>(rng.uniform(-c.palm_offset_jitter, c.palm_offset_jitter));
  h.palm_y = static_cast<float>(rng.uniform(-c.palm_offset_jitter, c.palm_offset_jitter));
  h.palm_z = c.center_depth +
             static_cast<float>(rng.uniform(-c.depth_jitter, c.depth_jitter));
  h.palm_r = c.palm_radius + static_cast<float>(rng.uniform(-c.palm_radius_jitter,
                                                            c.palm_radius_jitter));
  const float deg = static_cast<float>(M_PI) / 180.f;
  float hand_angle = static_cast<float>(
      rng.uniform(-c.hand_angle_jitter_deg, c.hand_angle_jitter_deg)) * deg;
  for (int i = 0; i < 5; ++i) {
    // Angle of finger i relative to straight up; fingers fan symmetrically
    // around the middle finger.
    float phi = hand_angle +
                (static_cast<float>(i) - 2.f) * c.spread_deg * deg +
                static_cast<float>(rng.uniform(-c.spread_jitter_deg,
                                               c.spread_jitter_deg)) * deg;
    float len = c.finger_length +
                static_cast<float>(rng.uniform(-c.finger_length_jitter,
                                               c.finger_length_jitter));
    float dx = std::sin(phi), dy = -std::cos(phi);
    Capsule f;
    f.r = c.finger_radius;
    f.x0 = h.palm_x + dx * h.palm_r * 0.9f;
    f.y0 = h.palm_y + dy * h.palm_r * 0.9f;
    f.z0 = h.palm_z;
    f.x1 = h.palm_x + dx * (h.palm_r + len);
    f.y1 = h.palm_y + dy * (h.palm_r + len);
    f.z1 = h.palm_z - c.tip_drop;
    h.fingers[static_cast<std::size_t>(i)] = f;
    // Ground truth is the front surface point at the capsule's far end.
    h.target_mm[i * 3 + 0] = f.x1;
    h.target_mm[i * 3 + 1] = f.y1;
    h.target_mm[i * 3 + 2] = f.z1 - f.r;
  }
  h.target_mm[15] = h.palm_x;
  h.target_mm[16] = h.palm_y;
  h.target_mm[17] = h.palm_z;
  return h;
}

void render_hand(const Hand& h, DepthFrame& frame) {
  const float ox = (frame.width - 1) / 2.f, oy = (frame.height - 1) / 2.f;
  for (int y = 0; y < frame.height; ++y) {
    float wy = (y - oy) * frame.mm_per_px;
    for (int x = 0; x < frame.width; ++x) {
      float wx = (x - ox) * frame.mm_per_px;
      float z = 0.f;  // missing
      float dpx = wx - h.palm_x, dpy = wy - h.palm_y;
      if (dpx * dpx + dpy * dpy <= h.palm_r * h.palm_r) z = h.palm_z;
      for (const Capsule& f : h.fingers) {
        float ax = f.x1 - f.x0, ay = f.y1 - f.y0;
        float len2 = ax * ax + ay * ay;
        float t = len2 > 0.f
                      ? std::clamp(((wx - f.x0) * ax + (wy - f.y0) * ay) / len2,
                                   0.f, 1.f)
                      : 0.f;
        float cx = f.x0 + t * ax, cy = f.y0 + t * ay;
        float dx = wx - cx, dy = wy - cy;
        float dd = dx * dx + dy * dy;
        if (dd <= f.r * f.r) {
          float zc = f.z0 + t * (f.z1 - f.z0) - std::sqrt(f.r * f.r - dd);
          if (z == 0.f || zc < z) z = zc;
        }
      }
      frame.at(y, x) = z;
    }
  }
}

}  // namespace

std::vector<Sample> synth_samples(std::uint64_t seed, int n,
                                  const SynthConfig& c) {
  if (n < 1) throw std::invalid_argument("synth: n must be >= 1");
  if (c.finger_length - c.finger_length_jitter <= 0.f || c.finger_radius <= 0.f)
    throw std::invalid_argument("synth: degenerate finger geometry");
  if (c.palm_radius - c.palm_radius_jitter <= 0.f)
    throw std::invalid_argument("synth: degenerate palm geometry");
  if (c.frame_size < 2 || c.mm_per_px <= 0.f || c.cube_size <= 0.f)
    throw std::invalid_argument("synth: invalid frame config");

  Rng rng(seed);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  DepthFrame frame;
  frame.width = frame.height = c.frame_size;
  frame.mm_per_px = c.mm_per_px;
  frame.depth_mm.assign(static_cast<std::size_t>(c.frame_size) * c.frame_size, 0.f);
  for (int i = 0; i < n; ++i) {
    Hand h = make_hand(rng, c);
    render_hand(h, frame);
    Sample s;
    s.meta.center = {h.palm_x, h.palm_y, h.palm_z};
    s.meta.cube_size = c.cube_size;
    s.meta.frame_id = static_cast<std::uint32_t>(i);
    s.depth = crop_and_normalize(frame, s.meta);
    if (c.with_edges) {
      s.edge = extract_edges(s.depth, c.edge);
      s.has_edge = true;
    }
    s.target_mm = h.target_mm;
    out.push_back(std::move(s));
  }
  return out;
}

void synth_generate(std::uint64_t seed, int n, const SynthConfig& config,
                    const std::string& out_path) {
  write_dataset(out_path, synth_samples(seed, n, config));
}

// --- FTDS container ----------------------------------------------------------

DatasetWriter::DatasetWriter(const std::string& path, std::uint32_t count,
                             int h, int w)
    : os_(path, std::ios::binary), path_(path), expected_(count) {
  if (!os_) throw std::runtime_error("cannot open for write: " + path);
  os_.write(kMagic, 4);
  binio::write_pod<std::uint32_t>(os_, kVersion);
  binio::write_pod<std::uint32_t>(os_, count);
  binio::write_pod<std::uint32_t>(os_, static_cast<std::uint32_t>(h));
  binio::write_pod<std::uint32_t>(os_, static_cast<std::uint32_t>(w));
}

DatasetWriter::~DatasetWriter() {
  if (!closed_ && written_ == expected_) close();
}

void DatasetWriter::append(const Sample& s) {
  if (written_ >= expected_)
    throw std::logic_error("dataset writer: more samples than declared");
  binio::write_f32(os_, s.depth.data(), s.depth.size());
  binio::write_pod<std::uint8_t>(os_, s.has_edge ? 1 : 0);
  if (s.has_edge) binio::write_f32(os_, s.edge.data(), s.edge.size());
  binio::write_f32(os_, s.target_mm.data(), s.target_mm.size());
  binio::write_f32(os_, s.meta.center.data(), 3);
  binio::write_pod<float>(os_, s.meta.cube_size);
  ++written_;
}

void DatasetWriter::close() {
  if (closed_) return;
  if (written_ != expected_)
    throw std::logic_error("dataset writer: wrote " + std::to_string(written_) +
                           " of " + std::to_string(expected_) + " samples");
  os_.flush();
  if (!os_) throw std::runtime_error("write failed: " + path_);
  os_.close();
  closed_ = true;
}

DatasetReader::DatasetReader(const std::string& path)
    : is_(path, std::ios::binary), path_(path) {
  if (!is_) throw std::runtime_error("cannot open dataset: " + path);
  char magic[4];
  is_.read(magic, 4);
  if (!is_ || std::string(magic, 4) != std::string(kMagic, 4))
    throw std::runtime_error("not an FTDS dataset: " + path);
  auto version = binio::read_pod<std::uint32_t>(is_, "version");
  if (version != kVersion)
    throw std::runtime_error("unsupported FTDS version " + std::to_string(version) +
                             " in " + path);
  count_ = binio::read_pod<std::uint32_t>(is_, "sample count");
  h_ = static_cast<int>(binio::read_pod<std::uint32_t>(is_, "height"));
  w_ = static_cast<int>(binio::read_pod<std::uint32_t>(is_, "width"));
}

bool DatasetReader::next(Sample& out) {
  if (index_ >= count_) return false;
  const std::string where = "sample " + std::to_string(index_) + " of " + path_;
  try {
    out.depth = Tensor({1, 1, h_, w_});
    binio::read_f32(is_, out.depth.data(), out.depth.size(), "depth raster");
    out.has_edge = binio::read_pod<std::uint8_t>(is_, "edge flag") != 0;
    if (out.has_edge) {
      out.edge = Tensor({1, 1, h_, w_});
      binio::read_f32(is_, out.edge.data(), out.edge.size(), "edge raster");
    } else {
      out.edge = Tensor();
    }
    binio::read_f32(is_, out.target_mm.data(), out.target_mm.size(), "targets");
    binio::read_f32(is_, out.meta.center.data(), 3, "crop center");
    out.meta.cube_size = binio::read_pod<float>(is_, "cube size");
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string(e.what()) + " at " + where);
  }
  out.meta.frame_id = index_;
  ++index_;
  return true;
}

std::vector<Sample> read_dataset(const std::string& path) {
  DatasetReader r(path);
  std::vector<Sample> all;
  all.reserve(r.size());
  Sample s;
  while (r.next(s)) all.push_back(s);
  return all;
}

void write_dataset(const std::string& path, const std::vector<Sample>& samples) {
  DatasetWriter w(path, static_cast<std::uint32_t>(samples.size()),
                  samples.empty() ? kCropSize : samples[0].depth.dim(2),
                  samples.empty() ? kCropSize : samples[0].depth.dim(3));
  for (const auto& s : samples) w.append(s);
  w.close();
}

}  // namespace ft
