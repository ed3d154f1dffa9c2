#include "motiongs/dataset.hpp"

#include <cstdio>
#include <fstream>

namespace mgs {

std::string Dataset::frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.ppm", index);
  return buf;
}

std::string Dataset::flow_name(int a, int b) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "flow_%04d_%04d.flo", a, b);
  return buf;
}

Dataset Dataset::load(const io::fs::path& root) {
  Dataset ds;
  ds.root = root;
  if (!io::fs::is_directory(root)) {
    throw ValidationError("dataset root '" + root.string() + "' is not a directory");
  }
  ds.cameras = io::read_cameras(root / "cameras.txt");
  if (ds.cameras.empty()) {
    throw ValidationError("dataset has no cameras in '" +
                          (root / "cameras.txt").string() + "'");
  }

  {
    std::ifstream tf(root / "times.txt");
    if (!tf) {
      throw IoError("cannot open '" + (root / "times.txt").string() + "'");
    }
    double t = 0;
    while (tf >> t) {
      ds.times.push_back(t);
    }
  }
  if (ds.times.size() != ds.cameras.size()) {
    throw ValidationError("dataset camera count (" + std::to_string(ds.cameras.size()) +
                          ") does not match timestamp count (" +
                          std::to_string(ds.times.size()) + ")");
  }
  for (size_t i = 0; i < ds.times.size(); ++i) {
    if (ds.times[i] < 0.0 || ds.times[i] > 1.0) {
      throw ValidationError("timestamp " + std::to_string(i) + " outside [0,1]");
    }
    if (i > 0 && !(ds.times[i] > ds.times[i - 1])) {
      throw ValidationError("timestamps must be strictly increasing");
    }
  }

  const int n = static_cast<int>(ds.cameras.size());
  for (int f = 0; f < n; ++f) {
    ds.images.push_back(io::read_ppm(root / frame_name(f)));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "depth_%04d.pfm", f);
    if (io::fs::exists(root / buf)) {
      ds.depths.push_back(io::read_pfm(root / buf));
    } else {
      ds.depths.emplace_back();
    }
    std::snprintf(buf, sizeof(buf), "mask_%04d.pgm", f);
    if (io::fs::exists(root / buf)) {
      ds.masks.push_back(io::read_motion_mask(root / buf));
    } else {
      ds.masks.emplace_back();
    }
  }

  const int W = ds.images[0].width, H = ds.images[0].height;
  for (int f = 0; f < n; ++f) {
    if (ds.images[f].width != W || ds.images[f].height != H) {
      throw ValidationError("frame " + std::to_string(f) +
                            " image size differs from frame 0");
    }
    if (ds.cameras[f].width != W || ds.cameras[f].height != H) {
      throw ValidationError("camera " + std::to_string(f) +
                            " image size does not match the images");
    }
    if (ds.depths[f] && (ds.depths[f]->width != W || ds.depths[f]->height != H)) {
      throw ValidationError("depth map " + std::to_string(f) + " size mismatch");
    }
    if (ds.masks[f] && (ds.masks[f]->width != W || ds.masks[f]->height != H)) {
      throw ValidationError("motion mask " + std::to_string(f) + " size mismatch");
    }
  }

  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      const io::fs::path p = root / flow_name(a, b);
      if (io::fs::exists(p)) {
        ds.flow_files[{a, b}] = p;
      }
    }
  }
  // Validate dimensions of whatever flow files exist.
  for (const auto& [pair, path] : ds.flow_files) {
    const FlowField f = io::read_flo(path);
    if (f.width != W || f.height != H) {
      throw ValidationError("flow file '" + path.string() + "' size mismatch");
    }
  }

  if (io::fs::exists(root / "synth.cfg")) {
    ds.synth = parse_synthetic_spec(io::ConfigMap::parse_file(root / "synth.cfg"));
    if (ds.synth->frames != n || ds.synth->width != W || ds.synth->height != H) {
      throw ValidationError("synth.cfg does not describe this dataset");
    }
    synthetic_scene_setup(*ds.synth, &ds.synth_canonical, &ds.synth_motions,
                          &ds.synth_cameras);
  }
  return ds;
}

std::optional<FlowField> Dataset::optical_flow(int a, int b) const {
  if (a < 0 || b < 0 || a >= frame_count() || b >= frame_count() || a == b) {
    throw ValidationError("optical_flow: bad frame pair");
  }
  if (synth) {
    FlowTriple t = synthetic_pair_flows(synth_canonical, synth_motions,
                                        synth_cameras[a], times[a],
                                        synth_cameras[b], times[b]);
    return std::move(t.optical);
  }
  const auto it = flow_files.find({a, b});
  if (it == flow_files.end()) {
    return std::nullopt;
  }
  return io::read_flo(it->second);
}

}  // namespace mgs
