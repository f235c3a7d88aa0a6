#pragma once

#include <cstdint>
#include <vector>

#include "detlab/assigner.hpp"
#include "detlab/rng.hpp"

namespace detlab {

// Bounds for the synthetic scene sampler.
struct SceneSpec {
  double width = 128.0;
  double height = 128.0;
  int min_objects = 1;
  int max_objects = 3;
  int num_classes = 3;
  // side lengths sized to the default grid: the 8x-stride virtual anchors
  // (64 and 128 px) need objects in this range for a usable IoU spread
  double min_size = 32.0;
  double max_size = 96.0;
  // weak class evidence over a quiet floor: boxes decode accurately while
  // classification stays the hard part, which is the regime the ranking
  // studies are about
  double signal_min = 0.06;  // per-object feature strength
  double signal_max = 0.25;
  double noise = 0.015;      // feature noise sigma

  bool valid() const;
};

// One synthetic image: ground-truth objects plus the parameters the feature
// renderer needs. noise_seed makes rendering a pure function of the record.
struct SceneRecord {
  double width = 0.0;
  double height = 0.0;
  std::vector<GtObject> objects;
  std::vector<double> signal;  // per object, aligned with objects
  double noise = 0.0;
  std::uint64_t noise_seed = 0;
};

SceneRecord generate_scene(Rng& rng, const SceneSpec& spec);

std::vector<SceneRecord> generate_dataset(std::uint64_t seed,
                                          const SceneSpec& spec, int count);

}  // namespace detlab
