#include "detlab/scene.hpp"

#include <cmath>

#include "detlab/errors.hpp"

namespace detlab {

bool SceneSpec::valid() const {
  if (width <= 0.0 || height <= 0.0) return false;
  if (min_objects < 0 || max_objects < min_objects) return false;
  if (num_classes <= 0) return false;
  if (min_size <= 0.0 || max_size < min_size) return false;
  if (max_size > width || max_size > height) return false;
  if (signal_min <= 0.0 || signal_max < signal_min) return false;
  if (noise < 0.0) return false;
  return true;
}

SceneRecord generate_scene(Rng& rng, const SceneSpec& spec) {
  if (!spec.valid()) throw ValidationError("generate_scene: invalid spec");

  SceneRecord scene;
  scene.width = spec.width;
  scene.height = spec.height;
  scene.noise = spec.noise;

  const int n = rng.uniform_int(spec.min_objects, spec.max_objects);
  scene.objects.reserve(static_cast<std::size_t>(n));
  scene.signal.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    GtObject obj;
    obj.class_id = static_cast<int>(rng.uniform_index(
        static_cast<std::uint64_t>(spec.num_classes)));
    const double w = rng.uniform(spec.min_size, spec.max_size);
    const double h = rng.uniform(spec.min_size, spec.max_size);
    const double cx = rng.uniform(w / 2.0, spec.width - w / 2.0);
    const double cy = rng.uniform(h / 2.0, spec.height - h / 2.0);
    obj.box = BBox{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
    scene.objects.push_back(obj);
    scene.signal.push_back(rng.uniform(spec.signal_min, spec.signal_max));
  }
  scene.noise_seed = rng.next_u64();
  return scene;
}

std::vector<SceneRecord> generate_dataset(std::uint64_t seed,
                                          const SceneSpec& spec, int count) {
  if (count < 0) throw ValidationError("generate_dataset: negative count");
  Rng rng(seed);
  std::vector<SceneRecord> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) scenes.push_back(generate_scene(rng, spec));
  return scenes;
}

}  // namespace detlab
