#pragma once

// Shared lazily-trained model stack for the long-running suites. Training the
// five classifier variants takes minutes, so trained weights are cached on
// disk (next to the test binary by default, CIA_FIXTURE_DIR overrides) and
// reloaded on later runs. Delete the directory to force a retrain.

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <cia/dataset.hpp>
#include <cia/network.hpp>

namespace fixture {

struct ModelRecipe {
  int variant;
  uint64_t data_seed;
  int n_train;
  int epochs;
  uint64_t seed;  // weight init and batch shuffling
};

// Model 0 is the reference configuration; the rest trade training length for
// the two half-resolution variants' slower convergence. Per-model datasets
// keep the ensemble members decorrelated; everyone is evaluated on held-out
// draws from seed 1.
inline const std::array<ModelRecipe, 5>& model_recipes() {
  static const std::array<ModelRecipe, 5> recipes = {{
      {0, 1, 8000, 8, 11},
      {1, 101, 8000, 14, 12},
      {2, 102, 8000, 14, 13},
      {3, 103, 6000, 8, 14},
      {4, 104, 6000, 8, 15},
  }};
  return recipes;
}

inline std::filesystem::path cache_dir() {
  if (const char* env = std::getenv("CIA_FIXTURE_DIR"); env && *env) return env;
  return "fixture_cache";
}

inline std::string model_path(int i) {
  return (cache_dir() / ("model" + std::to_string(i) + "_v7.cian")).string();
}

/// Trained classifier i, from the disk cache when present.
inline cia::Network trained_model(int i) {
  const ModelRecipe& r = model_recipes().at(static_cast<size_t>(i));
  const std::string path = model_path(i);
  if (std::filesystem::exists(path)) return cia::load_network(path);
  std::fprintf(stderr, "[fixture] training model %d (variant %d, %d images, %d epochs)...\n",
               i, r.variant, r.n_train, r.epochs);
  cia::Dataset ds = cia::generate_dataset(r.data_seed, r.n_train, 500);
  cia::TrainOptions opts;
  opts.epochs = r.epochs;
  cia::Network net = cia::train(cia::make_reference_network(r.variant, r.seed), ds.train.images,
                                ds.train.labels, opts, r.seed);
  std::filesystem::create_directories(cache_dir());
  cia::save_network(net, path);
  return net;
}

/// Shared held-out evaluation pool: seed-1 test draws, disjoint from every
/// training stream (including model 0's, which trains on the seed-1 train
/// split).
inline cia::Dataset eval_pool(int n_test = 400) {
  return cia::generate_dataset(1, 0, n_test);
}

}  // namespace fixture
