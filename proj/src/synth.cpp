#include "dexrank/synth.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "dexrank/error.hpp"

namespace dexrank {

double SynthRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t SynthRng::uniform_int(std::size_t lo, std::size_t hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<std::size_t>(engine_());
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return lo + static_cast<std::size_t>(x % span);
}

double SynthRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

void validate(const SynthSpec& s) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kInvalidSpec, why); };
  if (s.n_ids < 1 || s.d < 1 || s.n_models < 1 || s.queries_per_id < 1 || s.images_min < 1) {
    fail("counts must be >= 1");
  }
  if (s.tracklets_per_id < 2) {
    fail("tracklets_per_id must be >= 2 (one query tracklet plus gallery)");
  }
  if (s.images_max < s.images_min) fail("images_max < images_min");
  for (double v : {s.sigma_id, s.sigma_track, s.scale_jitter}) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail("spreads must be finite and >= 0");
  }
}

namespace {

std::vector<double> perturb(SynthRng& rng, const std::vector<double>& base, double spread) {
  const double scale = spread / std::sqrt(static_cast<double>(base.size()));
  std::vector<double> v = base;
  // Noise is drawn even for zero spread so the stream layout does not depend
  // on the spread values.
  for (double& x : v) x += scale * rng.normal();
  if (!normalize_in_place(v)) {
    // Cancellation to an exact zero vector is practically impossible; keep
    // the unperturbed base in that case.
    v = base;
  }
  return v;
}

std::string pad(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, value);
  return buf;
}

struct Builder {
  std::vector<std::vector<double>> members;  // per member, flattened rows
  std::vector<std::string> ids;
  std::vector<ImageRecord> records;
};

}  // namespace

SynthDataset generate(const SynthSpec& spec) {
  validate(spec);
  SynthRng rng(spec.seed);
  const std::size_t d = spec.d;
  Builder query;
  Builder gallery;
  query.members.resize(spec.n_models);
  gallery.members.resize(spec.n_models);

  for (std::size_t id = 0; id < spec.n_ids; ++id) {
    std::vector<double> centroid(d);
    for (double& x : centroid) x = rng.normal();
    normalize_in_place(centroid);
    const std::string identity = "id" + pad(id, 5);

    for (std::size_t t = 0; t < spec.tracklets_per_id; ++t) {
      const std::vector<double> center = perturb(rng, centroid, spec.sigma_id);
      const std::size_t count = rng.uniform_int(spec.images_min, spec.images_max);
      const std::string tracklet = identity + "_t" + pad(t, 2);
      const bool held_out = t == 0;
      Builder& target = held_out ? query : gallery;
      for (std::size_t img = 0; img < count; ++img) {
        const std::vector<double> base = perturb(rng, center, spec.sigma_track);
        std::vector<std::vector<double>> views(spec.n_models);
        for (auto& v : views) v = perturb(rng, base, spec.scale_jitter);
        if (held_out && img >= spec.queries_per_id) continue;
        const std::string image = tracklet + "_i" + pad(img, 3);
        for (std::size_t m = 0; m < spec.n_models; ++m) {
          target.members[m].insert(target.members[m].end(), views[m].begin(), views[m].end());
        }
        target.ids.push_back(image);
        target.records.push_back({image, tracklet, identity, "c" + pad(t, 2)});
      }
    }
  }

  SynthDataset out;
  for (std::size_t m = 0; m < spec.n_models; ++m) {
    out.query.emplace_back(query.ids.size(), d, std::move(query.members[m]), query.ids);
    out.gallery.emplace_back(gallery.ids.size(), d, std::move(gallery.members[m]), gallery.ids);
  }
  out.query_meta = CatalogMeta(std::move(query.records));
  out.gallery_meta = CatalogMeta(std::move(gallery.records));
  out.gallery_tracklets = TrackletTable::from_catalog(out.gallery_meta);
  return out;
}

}  // namespace dexrank
