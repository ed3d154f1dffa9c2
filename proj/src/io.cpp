#include "motiongs/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mgs::io {

namespace {

std::ifstream open_in(const fs::path& path, bool binary = true) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  return f;
}

std::ofstream open_out(const fs::path& path, bool binary = true) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  return f;
}

void put_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void put_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void put_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
double get_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

// Skips netpbm whitespace and '#' comments, then reads one integer token.
int pnm_int(std::istream& is, const fs::path& path) {
  int c = is.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    }
    c = is.get();
  }
  if (c == EOF) {
    throw IoError("truncated netpbm header in '" + path.string() + "'");
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) {
    throw IoError("malformed netpbm header in '" + path.string() + "'");
  }
  return value;
}

fs::path flo_mask_path(const fs::path& flo) {
  fs::path p = flo;
  p.replace_extension();  // drop .flo
  p += ".valid.pgm";
  return p;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_ppm(const fs::path& path, const Image& img) {
  if (img.channels != 3) {
    throw ValidationError("write_ppm expects a 3-channel image");
  }
  auto f = open_out(path);
  f << "P6\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 6);
  for (int y = 0; y < img.height; ++y) {
    size_t at = 0;
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        const auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
        row[at++] = static_cast<uint8_t>(q >> 8);  // netpbm is big-endian
        row[at++] = static_cast<uint8_t>(q & 0xff);
      }
    }
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

Image read_ppm(const fs::path& path) {
  auto f = open_in(path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '6') {
    throw IoError("'" + path.string() + "' is not a binary PPM");
  }
  const int w = pnm_int(f, path);
  const int h = pnm_int(f, path);
  const int maxval = pnm_int(f, path);
  if (maxval != 255 && maxval != 65535) {
    throw IoError("unsupported PPM maxval in '" + path.string() + "'");
  }
  Image img(w, h, 3);
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3 * bytes);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!f) {
      throw IoError("truncated PPM data in '" + path.string() + "'");
    }
    size_t at = 0;
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        int q = row[at++];
        if (bytes == 2) {
          q = (q << 8) | row[at++];
        }
        img.at(x, y, c) = static_cast<double>(q) / maxval;
      }
    }
  }
  return img;
}

void write_pgm(const fs::path& path, int width, int height,
               const std::vector<uint8_t>& set) {
  if (set.size() != static_cast<size_t>(width) * height) {
    throw ValidationError("write_pgm raster size mismatch");
  }
  auto f = open_out(path);
  f << "P5\n" << width << " " << height << "\n255\n";
  std::vector<uint8_t> bytes(set.size());
  for (size_t i = 0; i < set.size(); ++i) {
    bytes[i] = set[i] ? 255 : 0;
  }
  f.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

void read_pgm(const fs::path& path, int* width, int* height,
              std::vector<uint8_t>* set) {
  auto f = open_in(path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') {
    throw IoError("'" + path.string() + "' is not a binary PGM");
  }
  *width = pnm_int(f, path);
  *height = pnm_int(f, path);
  const int maxval = pnm_int(f, path);
  if (maxval != 255) {
    throw IoError("unsupported PGM maxval in '" + path.string() + "'");
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(*width) * *height);
  f.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!f) {
    throw IoError("truncated PGM data in '" + path.string() + "'");
  }
  set->resize(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    (*set)[i] = bytes[i] >= 128 ? 1 : 0;
  }
}

void write_pfm(const fs::path& path, const DepthMap& depth) {
  auto f = open_out(path);
  f << "Pf\n" << depth.width << " " << depth.height << "\n-1.0\n";
  std::vector<float> row(depth.width);
  for (int y = depth.height - 1; y >= 0; --y) {  // PFM rows run bottom-up
    for (int x = 0; x < depth.width; ++x) {
      const size_t p = static_cast<size_t>(y) * depth.width + x;
      row[x] = depth.valid[p] ? static_cast<float>(depth.z[p]) : 0.0f;
    }
    f.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
  }
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

DepthMap read_pfm(const fs::path& path) {
  auto f = open_in(path);
  std::string magic;
  f >> magic;
  if (magic != "Pf") {
    throw IoError("'" + path.string() + "' is not a grayscale PFM");
  }
  int w = 0, h = 0;
  double scale = 0;
  f >> w >> h >> scale;
  f.get();  // single whitespace after the header
  if (scale >= 0) {
    throw IoError("big-endian PFM not supported: '" + path.string() + "'");
  }
  DepthMap d(w, h);
  std::vector<float> row(w);
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!f) {
      throw IoError("truncated PFM data in '" + path.string() + "'");
    }
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      d.z[p] = row[x];
      d.valid[p] = row[x] > 0 ? 1 : 0;
    }
  }
  return d;
}

void write_flo(const fs::path& path, const FlowField& flow) {
  auto f = open_out(path);
  const float magic = 202021.25f;
  f.write(reinterpret_cast<const char*>(&magic), sizeof(magic));
  const int32_t w = flow.width, h = flow.height;
  f.write(reinterpret_cast<const char*>(&w), sizeof(w));
  f.write(reinterpret_cast<const char*>(&h), sizeof(h));
  std::vector<float> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      row[2 * x] = static_cast<float>(flow.dx(x, y));
      row[2 * x + 1] = static_cast<float>(flow.dy(x, y));
    }
    f.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
  }
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
  write_pgm(flo_mask_path(path), flow.width, flow.height, flow.valid);
}

FlowField read_flo(const fs::path& path) {
  auto f = open_in(path);
  float magic = 0;
  f.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  if (magic != 202021.25f) {
    throw IoError("'" + path.string() + "' is not a .flo file");
  }
  int32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), sizeof(w));
  f.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) {
    throw IoError("implausible .flo dimensions in '" + path.string() + "'");
  }
  FlowField flow(w, h);
  std::vector<float> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
    if (!f) {
      throw IoError("truncated .flo data in '" + path.string() + "'");
    }
    for (int x = 0; x < w; ++x) {
      flow.dx(x, y) = row[2 * x];
      flow.dy(x, y) = row[2 * x + 1];
    }
  }
  const fs::path maskp = flo_mask_path(path);
  if (fs::exists(maskp)) {
    int mw = 0, mh = 0;
    read_pgm(maskp, &mw, &mh, &flow.valid);
    if (mw != w || mh != h) {
      throw IoError("validity mask size mismatch for '" + path.string() + "'");
    }
  } else {
    std::fill(flow.valid.begin(), flow.valid.end(), 1);
  }
  // Invalid pixels carry (0,0) by contract.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!flow.is_valid(x, y)) {
        flow.dx(x, y) = 0.0;
        flow.dy(x, y) = 0.0;
      }
    }
  }
  return flow;
}

void write_motion_mask(const fs::path& path, const MotionMask& mask) {
  write_pgm(path, mask.width, mask.height, mask.dynamic);
}

MotionMask read_motion_mask(const fs::path& path) {
  MotionMask m;
  read_pgm(path, &m.width, &m.height, &m.dynamic);
  return m;
}

std::string format_camera_line(const Camera& cam) {
  std::string s;
  for (double v : {cam.fx, cam.fy, cam.cx, cam.cy}) {
    s += format_double(v) + " ";
  }
  s += std::to_string(cam.width) + " " + std::to_string(cam.height);
  for (double v : {cam.extrinsics.rot.w, cam.extrinsics.rot.x, cam.extrinsics.rot.y,
                   cam.extrinsics.rot.z, cam.extrinsics.trans.x(),
                   cam.extrinsics.trans.y(), cam.extrinsics.trans.z()}) {
    s += " " + format_double(v);
  }
  return s;
}

void write_cameras(const fs::path& path, const std::vector<Camera>& cams) {
  auto f = open_out(path, false);
  for (const Camera& c : cams) {
    f << format_camera_line(c) << "\n";
  }
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

std::vector<Camera> read_cameras(const fs::path& path) {
  auto f = open_in(path, false);
  std::vector<Camera> cams;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream ss(line);
    Camera c;
    double w = 0, h = 0;
    if (!(ss >> c.fx >> c.fy >> c.cx >> c.cy >> w >> h >> c.extrinsics.rot.w >>
          c.extrinsics.rot.x >> c.extrinsics.rot.y >> c.extrinsics.rot.z >>
          c.extrinsics.trans.x() >> c.extrinsics.trans.y() >>
          c.extrinsics.trans.z())) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed camera line");
    }
    c.width = static_cast<int>(w);
    c.height = static_cast<int>(h);
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

void write_scene(const fs::path& path, const GaussianScene& scene) {
  auto f = open_out(path);
  f.write("MGS1", 4);
  const uint8_t flag = scene.has_sh ? 1 : 0;
  f.write(reinterpret_cast<const char*>(&flag), 1);
  put_u64(f, scene.size());
  for (const Gaussian3D& g : scene.gaussians) {
    for (int i = 0; i < 3; ++i) put_f64(f, g.position[i]);
    put_f64(f, g.rotation.w);
    put_f64(f, g.rotation.x);
    put_f64(f, g.rotation.y);
    put_f64(f, g.rotation.z);
    for (int i = 0; i < 3; ++i) put_f64(f, g.log_scale[i]);
    put_f64(f, g.opacity_logit);
    for (int i = 0; i < 3; ++i) put_f64(f, g.color[i]);
    if (scene.has_sh) {
      for (double v : g.sh) put_f64(f, v);
    }
  }
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

GaussianScene read_scene(const fs::path& path) {
  auto f = open_in(path);
  char magic[4] = {};
  f.read(magic, 4);
  if (std::memcmp(magic, "MGS1", 4) != 0) {
    throw IoError("'" + path.string() + "' is not a gaussian scene file");
  }
  uint8_t flag = 0;
  f.read(reinterpret_cast<char*>(&flag), 1);
  const uint64_t n = get_u64(f);
  if (!f || n > (1ull << 32)) {
    throw IoError("implausible gaussian count in '" + path.string() + "'");
  }
  GaussianScene scene;
  scene.has_sh = flag == 1;
  scene.gaussians.resize(n);
  for (Gaussian3D& g : scene.gaussians) {
    for (int i = 0; i < 3; ++i) g.position[i] = get_f64(f);
    g.rotation.w = get_f64(f);
    g.rotation.x = get_f64(f);
    g.rotation.y = get_f64(f);
    g.rotation.z = get_f64(f);
    for (int i = 0; i < 3; ++i) g.log_scale[i] = get_f64(f);
    g.opacity_logit = get_f64(f);
    for (int i = 0; i < 3; ++i) g.color[i] = get_f64(f);
    if (scene.has_sh) {
      for (double& v : g.sh) v = get_f64(f);
    }
  }
  if (!f) {
    throw IoError("truncated scene file '" + path.string() + "'");
  }
  return scene;
}

void write_deformation(const fs::path& path, const DeformationField& field) {
  auto f = open_out(path);
  f.write("MGD1", 4);
  const uint8_t tag = static_cast<uint8_t>(field.variant());
  f.write(reinterpret_cast<const char*>(&tag), 1);
  if (field.variant() == DeformVariant::kPerGaussianBasis) {
    put_u64(f, field.gaussian_count());
    put_u32(f, static_cast<uint32_t>(field.basis_config().poly_order));
    put_u32(f, static_cast<uint32_t>(field.basis_config().fourier_order));
  } else {
    put_u32(f, static_cast<uint32_t>(field.mlp_config().pe_position));
    put_u32(f, static_cast<uint32_t>(field.mlp_config().pe_time));
    put_u32(f, static_cast<uint32_t>(field.mlp_config().hidden));
    put_u32(f, static_cast<uint32_t>(field.mlp_config().layers));
  }
  put_u64(f, static_cast<uint64_t>(field.params().size()));
  for (Eigen::Index i = 0; i < field.params().size(); ++i) {
    put_f64(f, field.params()[i]);
  }
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

DeformationField read_deformation(const fs::path& path) {
  auto f = open_in(path);
  char magic[4] = {};
  f.read(magic, 4);
  if (std::memcmp(magic, "MGD1", 4) != 0) {
    throw IoError("'" + path.string() + "' is not a deformation checkpoint");
  }
  uint8_t tag = 0;
  f.read(reinterpret_cast<char*>(&tag), 1);
  BasisConfig bc;
  MlpConfig mc;
  uint64_t count = 0;
  if (tag == 0) {
    count = get_u64(f);
    bc.poly_order = static_cast<int>(get_u32(f));
    bc.fourier_order = static_cast<int>(get_u32(f));
  } else if (tag == 1) {
    mc.pe_position = static_cast<int>(get_u32(f));
    mc.pe_time = static_cast<int>(get_u32(f));
    mc.hidden = static_cast<int>(get_u32(f));
    mc.layers = static_cast<int>(get_u32(f));
  } else {
    throw IoError("unknown deformation variant tag in '" + path.string() + "'");
  }
  const uint64_t n = get_u64(f);
  if (!f || n > (1ull << 32)) {
    throw IoError("implausible parameter count in '" + path.string() + "'");
  }
  VecX params(static_cast<Eigen::Index>(n));
  for (uint64_t i = 0; i < n; ++i) {
    params[static_cast<Eigen::Index>(i)] = get_f64(f);
  }
  if (!f) {
    throw IoError("truncated deformation checkpoint '" + path.string() + "'");
  }
  return DeformationField::from_parts(static_cast<DeformVariant>(tag), bc, mc, count,
                                      std::move(params));
}

ConfigMap ConfigMap::parse_file(const fs::path& path) {
  auto f = open_in(path, false);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path.string());
}

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& name) {
  ConfigMap cfg;
  cfg.name_ = name;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(name + ":" + std::to_string(lineno) +
                            ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ValidationError(name + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.entries_[key] = {value, lineno};
  }
  return cfg;
}

std::string ConfigMap::get_string(const std::string& key,
                                  const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    return fallback;
  }
  try {
    size_t used = 0;
    const double v = std::stod(it->second.value, &used);
    if (used != it->second.value.size()) {
      throw std::invalid_argument("");
    }
    return v;
  } catch (const std::exception&) {
    throw ValidationError(name_ + ":" + std::to_string(it->second.line) +
                          ": '" + key + "' is not a number");
  }
}

int64_t ConfigMap::get_int(const std::string& key, int64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    return fallback;
  }
  try {
    size_t used = 0;
    const int64_t v = std::stoll(it->second.value, &used);
    if (used != it->second.value.size()) {
      throw std::invalid_argument("");
    }
    return v;
  } catch (const std::exception&) {
    throw ValidationError(name_ + ":" + std::to_string(it->second.line) +
                          ": '" + key + "' is not an integer");
  }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    return fallback;
  }
  const std::string& v = it->second.value;
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ValidationError(name_ + ":" + std::to_string(it->second.line) + ": '" +
                        key + "' is not a boolean");
}

void ConfigMap::require_known_keys(const std::vector<std::string>& allowed) const {
  for (const auto& [key, entry] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError(name_ + ":" + std::to_string(entry.line) +
                            ": unknown key '" + key + "'");
    }
  }
}

void write_file_bytes(const fs::path& path, const std::string& bytes) {
  auto f = open_out(path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

std::string read_file_bytes(const fs::path& path) {
  auto f = open_in(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace mgs::io
