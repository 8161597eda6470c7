#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "dexrank/catalog.hpp"
#include "dexrank/dex.hpp"

namespace dexrank {

/// Parameters of the synthetic identity / tracklet / image hierarchy.
///
/// Spreads are total noise magnitudes: each coordinate receives Gaussian
/// noise with standard deviation sigma / sqrt(d), so the expected noise norm
/// is about sigma whatever the dimension.
struct SynthSpec {
  std::size_t n_ids = 100;
  std::size_t tracklets_per_id = 3;   // the first one per identity is held out as query
  std::size_t images_min = 4;         // images per tracklet, inclusive range
  std::size_t images_max = 8;
  std::size_t d = 128;
  double sigma_id = 1.2;     // tracklet centre around the identity centroid
  double sigma_track = 0.8;   // image around its tracklet centre
  std::size_t n_models = 1;  // ensemble views per image
  double scale_jitter = 0.0;  // per-view noise
  std::size_t queries_per_id = 2;  // capped at the held-out tracklet length
  std::uint64_t seed = 0;
};

void validate(const SynthSpec& spec);

struct SynthDataset {
  EnsembleInput query;    // n_models members
  EnsembleInput gallery;  // n_models members
  CatalogMeta query_meta;
  CatalogMeta gallery_meta;
  TrackletTable gallery_tracklets;
};

/// Portable random source: std::mt19937_64 (bit-exact across standard
/// libraries) with hand-written uniform and normal transforms, since the
/// std distributions are implementation-defined.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1), 53 bits.
  double uniform();
  // Uniform integer on [lo, hi], rejection sampled.
  std::size_t uniform_int(std::size_t lo, std::size_t hi);
  // Box-Muller, both outputs used.
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

SynthDataset generate(const SynthSpec& spec);

}  // namespace dexrank
