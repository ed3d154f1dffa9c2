#pragma once

#include "motiongs/deformation.hpp"
#include "motiongs/flowfield.hpp"
#include "motiongs/gaussians.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace mgs::io {

namespace fs = std::filesystem;

// --- images -----------------------------------------------------------------

// 16-bit binary PPM (P6, maxval 65535) for lossless-enough round trips.
// Values are clamped to [0,1] on write; 8-bit files are accepted on read.
void write_ppm(const fs::path& path, const Image& img);
Image read_ppm(const fs::path& path);

// Binary PGM (P5), 255 = set.
void write_pgm(const fs::path& path, int width, int height,
               const std::vector<uint8_t>& set);
void read_pgm(const fs::path& path, int* width, int* height,
              std::vector<uint8_t>* set);

// PFM float raster, scale -1 (little endian), rows bottom-up. Depth validity
// convention: invalid pixels are stored as 0.
void write_pfm(const fs::path& path, const DepthMap& depth);
DepthMap read_pfm(const fs::path& path);

// --- flow -------------------------------------------------------------------

// Middlebury .flo (float32) plus a sibling <stem>.valid.pgm validity mask.
void write_flo(const fs::path& path, const FlowField& flow);
FlowField read_flo(const fs::path& path);

void write_motion_mask(const fs::path& path, const MotionMask& mask);
MotionMask read_motion_mask(const fs::path& path);

// --- cameras ----------------------------------------------------------------

// One camera per line: fx fy cx cy width height qw qx qy qz tx ty tz.
void write_cameras(const fs::path& path, const std::vector<Camera>& cams);
std::vector<Camera> read_cameras(const fs::path& path);

std::string format_camera_line(const Camera& cam);

// --- scene / deformation checkpoints ----------------------------------------

void write_scene(const fs::path& path, const GaussianScene& scene);
GaussianScene read_scene(const fs::path& path);

void write_deformation(const fs::path& path, const DeformationField& field);
DeformationField read_deformation(const fs::path& path);

// --- flat key=value config ----------------------------------------------------

struct ConfigEntry {
  std::string value;
  int line = 0;
};

class ConfigMap {
 public:
  static ConfigMap parse_file(const fs::path& path);
  static ConfigMap parse_string(const std::string& text, const std::string& name);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

  // Every key must be in `allowed`; reports offending line numbers.
  void require_known_keys(const std::vector<std::string>& allowed) const;

  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  const std::string& name() const { return name_; }

 private:
  std::map<std::string, ConfigEntry> entries_;
  std::string name_;
};

// --- small binary helpers (little-endian host assumed) ------------------------

void write_file_bytes(const fs::path& path, const std::string& bytes);
std::string read_file_bytes(const fs::path& path);

std::string format_double(double v);  // shortest round-trip-exact decimal

}  // namespace mgs::io
