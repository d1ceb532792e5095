#include "kws/prototypes.hpp"

#include <cmath>

namespace kws {

double mae_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) fail(ErrorKind::Shape, "latent length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a[i]) - double(b[i]));
  return acc / double(a.size());
}

namespace {

std::vector<float> class_mean(std::span<const LabeledLatent> latents, Label cls) {
  std::vector<double> sum;
  size_t n = 0;
  for (const LabeledLatent& l : latents) {
    if (l.label != cls) continue;
    if (sum.empty()) sum.assign(l.latent.size(), 0.0);
    if (sum.size() != l.latent.size()) fail(ErrorKind::Shape, "latent length mismatch");
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += l.latent[i];
    ++n;
  }
  if (n == 0)
    fail(ErrorKind::IncompleteArtifacts,
         std::string("no latents for class ") + label_name(cls));
  std::vector<float> mean(sum.size());
  for (size_t i = 0; i < sum.size(); ++i) mean[i] = float(sum[i] / double(n));
  return mean;
}

ClassArtifacts class_artifacts(std::span<const LabeledLatent> latents, Label cls,
                               std::vector<float> prototype, double n_sigma) {
  std::vector<double> dists;
  for (const LabeledLatent& l : latents) {
    if (l.label != cls) continue;
    dists.push_back(mae_distance(l.latent, prototype));
  }
  if (dists.size() < 2)
    fail(ErrorKind::InsufficientData,
         std::string("need >= 2 latents per class, class ") + label_name(cls));

  double mu = 0.0;
  for (double d : dists) mu += d;
  mu /= double(dists.size());
  double var = 0.0;
  for (double d : dists) var += (d - mu) * (d - mu);
  var /= double(dists.size()); // population

  ClassArtifacts a;
  a.class_id = cls;
  a.prototype = std::move(prototype);
  a.mean_dist = mu;
  a.std_dist = std::sqrt(var);
  a.n_sigma = n_sigma;
  a.threshold = mu + n_sigma * a.std_dist;
  return a;
}

} // namespace

ClassPrototypes compute_prototypes(std::span<const LabeledLatent> latents) {
  ClassPrototypes p;
  p.yes = class_mean(latents, Label::Yes);
  p.no = class_mean(latents, Label::No);
  return p;
}

ArtifactSet compute_artifacts(std::span<const LabeledLatent> latents, double n_sigma) {
  ClassPrototypes protos = compute_prototypes(latents);
  ArtifactSet set;
  set.yes = class_artifacts(latents, Label::Yes, std::move(protos.yes), n_sigma);
  set.no = class_artifacts(latents, Label::No, std::move(protos.no), n_sigma);
  return set;
}

} // namespace kws
