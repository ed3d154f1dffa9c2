#pragma once

#include "motiongs/io.hpp"
#include "motiongs/synthetic.hpp"

#include <map>
#include <optional>

namespace mgs {

// On-disk dataset layout (all paths relative to the root):
//   cameras.txt                 one camera per line, frame order
//   times.txt                   one timestamp in [0,1] per line
//   frame_%04d.ppm              images
//   depth_%04d.pfm              optional ground-truth depth
//   mask_%04d.pgm               optional motion masks (255 = dynamic)
//   flow_%04d_%04d.flo          optional optical flow for consecutive pairs
//   camflow/motflow_%04d_%04d.flo  ground-truth decomposition (synthetic sets)
//   synth.cfg                   optional generative spec; enables exact optical
//                               flow for arbitrary ordered frame pairs
struct Dataset {
  io::fs::path root;
  std::vector<Image> images;
  std::vector<Camera> cameras;
  std::vector<double> times;
  std::vector<std::optional<DepthMap>> depths;
  std::vector<std::optional<MotionMask>> masks;
  std::map<std::pair<int, int>, io::fs::path> flow_files;

  std::optional<SyntheticSceneSpec> synth;
  GaussianScene synth_canonical;           // populated when synth is present
  std::vector<MotionModel> synth_motions;
  std::vector<Camera> synth_cameras;       // the true (un-noised) trajectory

  int frame_count() const { return static_cast<int>(images.size()); }
  int width() const { return images.empty() ? 0 : images[0].width; }
  int height() const { return images.empty() ? 0 : images[0].height; }

  static Dataset load(const io::fs::path& root);

  // Optical flow for an ordered frame pair: analytic ground truth when the
  // generative spec is available, otherwise a matching .flo file; nullopt when
  // neither exists.
  std::optional<FlowField> optical_flow(int a, int b) const;

  static std::string frame_name(int index);
  static std::string flow_name(int a, int b);
};

}  // namespace mgs
