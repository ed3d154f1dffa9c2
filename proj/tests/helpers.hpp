// Shared test fixtures: in-memory synthetic datasets for trainer-level tests.
#pragma once

#include "motiongs/dataset.hpp"
#include "motiongs/synthetic.hpp"

namespace helpers {

using namespace mgs;

inline Dataset make_dataset(const SyntheticSceneSpec& spec) {
  const SyntheticData data = generate_synthetic(spec);
  Dataset ds;
  ds.root = "<memory>";
  for (const SyntheticFrame& f : data.frames) {
    ds.images.push_back(f.image);
    ds.cameras.push_back(f.camera);
    ds.times.push_back(f.time);
    ds.depths.push_back(f.depth);
    ds.masks.push_back(f.mask);
  }
  ds.synth = spec;
  ds.synth_canonical = data.canonical;
  ds.synth_motions = data.motions;
  for (const SyntheticFrame& f : data.frames) {
    ds.synth_cameras.push_back(f.camera);
  }
  return ds;
}

inline SyntheticSceneSpec trainer_spec(uint64_t seed = 21, int frames = 6) {
  SyntheticSceneSpec spec;
  spec.seed = seed;
  spec.frames = frames;
  spec.width = 32;
  spec.height = 32;
  spec.n_static = 10;
  spec.n_dynamic = 2;
  spec.motion_scale = 0.35;
  spec.scale_min = 0.06;
  spec.scale_max = 0.14;
  return spec;
}

}  // namespace helpers
