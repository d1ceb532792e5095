// Per-class latent prototypes, MAE distances, and the distance statistics
// behind the effective-sample threshold.
#pragma once

#include <span>
#include <vector>

#include "kws/audio.hpp"

namespace kws {

struct LabeledLatent {
  std::vector<float> latent;
  Label label = Label::Yes;
};

struct ClassArtifacts {
  Label class_id = Label::Yes;
  std::vector<float> prototype; // mean latent, dequantized float
  double mean_dist = 0.0;       // mu of within-class MAE distances
  double std_dist = 0.0;        // population sigma
  double n_sigma = 0.0;
  double threshold = 0.0;       // mu + n_sigma * sigma
};

struct ArtifactSet {
  ClassArtifacts yes, no;

  const ClassArtifacts& of(Label l) const {
    return l == Label::Yes ? yes : no;
  }
};

struct ClassPrototypes {
  std::vector<float> yes, no;
};

// mean(|a_i - b_i|); lengths must match.
double mae_distance(std::span<const float> a, std::span<const float> b);

// Elementwise arithmetic mean per class; both classes must be present.
ClassPrototypes compute_prototypes(std::span<const LabeledLatent> latents);

// Prototypes, within-class MAE distances to the own prototype, then mu,
// sigma (population) and threshold mu + n*sigma. Needs >= 2 per class.
ArtifactSet compute_artifacts(std::span<const LabeledLatent> latents, double n_sigma);

} // namespace kws
