#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bae/envs.hpp"
#include "bae/rng.hpp"
#include "bae/rollout.hpp"

namespace bae {

enum class AugKind { kIdentity, kCutoutColor, kRandomCrop, kAmplitudeScale };

/// Whether augmentation parameters are redrawn per observation or once per buffer.
enum class AugSampling { kPerObs, kPerBuffer };

struct AugmentationSpec {
  AugKind kind = AugKind::kIdentity;
  double alpha = 0.8;     // amplitude range
  double beta = 1.4;
  int pad = 1;            // random crop padding, cells
  double box_min = 0.125; // cutout side length as a fraction of the image side
  double box_max = 0.5;
  AugSampling sampling = AugSampling::kPerObs;

  /// Throws ConfigError when parameters are out of range.
  void validate() const;

  static AugmentationSpec identity() { return {}; }
  static AugmentationSpec amplitude(double alpha, double beta);
  static AugmentationSpec cutout(double box_min = 0.125, double box_max = 0.5);
  static AugmentationSpec crop(int pad = 1);
};

/// Sampled parameters of one transformation.
struct AugDraw {
  double amplitude = 1.0;
  std::size_t box_y = 0, box_x = 0, box_h = 0, box_w = 0;
  std::vector<double> color;
  std::size_t crop_y = 0, crop_x = 0;
};

std::string to_string(AugKind kind);
AugKind parse_aug_kind(const std::string& s);
std::string to_string(AugSampling s);
AugSampling parse_aug_sampling(const std::string& s);

/// Cutout for images, amplitude scaling for vectors. BAE uses the [0.8, 1.4]
/// amplitude range; RAD and DRAC use [0.6, 1.2].
AugmentationSpec default_augmentation(const std::string& method, ObsKind obs);

AugDraw sample_draw(const AugmentationSpec& spec, const Obs& obs, Rng& rng);
Obs apply_draw(const AugmentationSpec& spec, const AugDraw& draw, const Obs& obs);
/// f(s, v): ContractError when the kind does not fit the observation kind.
Obs apply(const AugmentationSpec& spec, const Obs& obs, Rng& rng);

/// B': same actions, rewards and flags as `buffer`; observations (including
/// bootstrap observations) transformed. Bootstrap values are left for the
/// caller to recompute.
RolloutBuffer apply_to_buffer(const AugmentationSpec& spec, const RolloutBuffer& buffer, Rng& rng);

}  // namespace bae
