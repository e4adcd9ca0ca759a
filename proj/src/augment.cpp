#include "bae/augment.hpp"

#include <algorithm>
#include <cmath>

#include "bae/errors.hpp"

namespace bae {

void AugmentationSpec::validate() const {
  switch (kind) {
    case AugKind::kIdentity:
      break;
    case AugKind::kAmplitudeScale:
      if (!(alpha > 0.0) || !(alpha <= beta))
        throw ConfigError("amplitude_scale requires 0 < alpha <= beta");
      break;
    case AugKind::kCutoutColor:
      if (!(box_min > 0.0 && box_min <= 1.0 && box_max > 0.0 && box_max <= 1.0 && box_min <= box_max))
        throw ConfigError("cutout_color box fractions must satisfy 0 < min <= max <= 1");
      break;
    case AugKind::kRandomCrop:
      if (pad < 0) throw ConfigError("random_crop pad must be >= 0");
      break;
  }
}

AugmentationSpec AugmentationSpec::amplitude(double alpha, double beta) {
  AugmentationSpec s;
  s.kind = AugKind::kAmplitudeScale;
  s.alpha = alpha;
  s.beta = beta;
  s.validate();
  return s;
}

AugmentationSpec AugmentationSpec::cutout(double box_min, double box_max) {
  AugmentationSpec s;
  s.kind = AugKind::kCutoutColor;
  s.box_min = box_min;
  s.box_max = box_max;
  s.validate();
  return s;
}

AugmentationSpec AugmentationSpec::crop(int pad) {
  AugmentationSpec s;
  s.kind = AugKind::kRandomCrop;
  s.pad = pad;
  s.validate();
  return s;
}

std::string to_string(AugKind kind) {
  switch (kind) {
    case AugKind::kIdentity: return "identity";
    case AugKind::kCutoutColor: return "cutout_color";
    case AugKind::kRandomCrop: return "random_crop";
    case AugKind::kAmplitudeScale: return "amplitude_scale";
  }
  return "identity";
}

AugKind parse_aug_kind(const std::string& s) {
  if (s == "identity") return AugKind::kIdentity;
  if (s == "cutout_color") return AugKind::kCutoutColor;
  if (s == "random_crop") return AugKind::kRandomCrop;
  if (s == "amplitude_scale") return AugKind::kAmplitudeScale;
  throw ConfigError("unknown augmentation kind '" + s + "'");
}

std::string to_string(AugSampling s) { return s == AugSampling::kPerObs ? "per_obs" : "per_buffer"; }

AugSampling parse_aug_sampling(const std::string& s) {
  if (s == "per_obs") return AugSampling::kPerObs;
  if (s == "per_buffer") return AugSampling::kPerBuffer;
  throw ConfigError("unknown augmentation sampling '" + s + "'");
}

AugmentationSpec default_augmentation(const std::string& method, ObsKind obs) {
  if (obs == ObsKind::kImage) return AugmentationSpec::cutout();
  if (method == "rad" || method == "drac") return AugmentationSpec::amplitude(0.6, 1.2);
  return AugmentationSpec::amplitude(0.8, 1.4);
}

namespace {

void check_compatible(const AugmentationSpec& spec, const Obs& obs) {
  const bool image = obs.kind == ObsKind::kImage;
  if ((spec.kind == AugKind::kCutoutColor || spec.kind == AugKind::kRandomCrop) && !image)
    throw ContractError(to_string(spec.kind) + " requires an image observation");
  if (spec.kind == AugKind::kAmplitudeScale && image)
    throw ContractError("amplitude_scale requires a vector observation");
}

std::size_t box_side(double fraction, std::size_t extent) {
  const auto side = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(extent)));
  return std::clamp<std::size_t>(side, 1, extent);
}

}  // namespace

AugDraw sample_draw(const AugmentationSpec& spec, const Obs& obs, Rng& rng) {
  check_compatible(spec, obs);
  AugDraw d;
  switch (spec.kind) {
    case AugKind::kIdentity:
      break;
    case AugKind::kAmplitudeScale:
      d.amplitude = rng.uniform(spec.alpha, spec.beta);
      break;
    case AugKind::kCutoutColor:
      d.box_h = box_side(rng.uniform(spec.box_min, spec.box_max), obs.height);
      d.box_w = box_side(rng.uniform(spec.box_min, spec.box_max), obs.width);
      d.box_y = rng.index(obs.height - d.box_h + 1);
      d.box_x = rng.index(obs.width - d.box_w + 1);
      d.color.resize(obs.channels);
      for (double& c : d.color) c = rng.uniform();
      break;
    case AugKind::kRandomCrop: {
      const auto span = static_cast<std::size_t>(2 * spec.pad + 1);
      d.crop_y = rng.index(span);
      d.crop_x = rng.index(span);
      break;
    }
  }
  return d;
}

Obs apply_draw(const AugmentationSpec& spec, const AugDraw& draw, const Obs& obs) {
  check_compatible(spec, obs);
  switch (spec.kind) {
    case AugKind::kIdentity:
      return obs;
    case AugKind::kAmplitudeScale: {
      Obs out = obs;
      for (double& v : out.data) v *= draw.amplitude;
      return out;
    }
    case AugKind::kCutoutColor: {
      if (draw.color.size() != obs.channels || draw.box_y + draw.box_h > obs.height ||
          draw.box_x + draw.box_w > obs.width)
        throw ContractError("cutout_color: draw does not fit the observation");
      Obs out = obs;
      for (std::size_t c = 0; c < obs.channels; ++c)
        for (std::size_t y = draw.box_y; y < draw.box_y + draw.box_h; ++y)
          for (std::size_t x = draw.box_x; x < draw.box_x + draw.box_w; ++x)
            out.at(c, y, x) = draw.color[c];
      return out;
    }
    case AugKind::kRandomCrop: {
      // Window into the zero-padded image; (crop_y, crop_x) is its corner in padded coordinates.
      Obs out = Obs::image(obs.channels, obs.height, obs.width, 0.0);
      const auto pad = static_cast<std::ptrdiff_t>(spec.pad);
      for (std::size_t c = 0; c < obs.channels; ++c)
        for (std::size_t y = 0; y < obs.height; ++y)
          for (std::size_t x = 0; x < obs.width; ++x) {
            const auto sy = static_cast<std::ptrdiff_t>(y + draw.crop_y) - pad;
            const auto sx = static_cast<std::ptrdiff_t>(x + draw.crop_x) - pad;
            if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(obs.height) &&
                sx < static_cast<std::ptrdiff_t>(obs.width))
              out.at(c, y, x) = obs.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
          }
      return out;
    }
  }
  return obs;
}

Obs apply(const AugmentationSpec& spec, const Obs& obs, Rng& rng) {
  return apply_draw(spec, sample_draw(spec, obs, rng), obs);
}

RolloutBuffer apply_to_buffer(const AugmentationSpec& spec, const RolloutBuffer& buffer, Rng& rng) {
  spec.validate();
  if (!buffer.finalized) throw ContractError("apply_to_buffer: buffer collection is not complete");
  RolloutBuffer out = buffer;
  if (spec.kind == AugKind::kIdentity) return out;
  if (spec.sampling == AugSampling::kPerBuffer) {
    if (buffer.steps.empty()) return out;
    const AugDraw draw = sample_draw(spec, buffer.steps.front().obs, rng);
    for (auto& s : out.steps) s.obs = apply_draw(spec, draw, s.obs);
    for (auto& b : out.bootstraps) b.obs = apply_draw(spec, draw, b.obs);
    return out;
  }
  for (auto& s : out.steps) s.obs = apply(spec, s.obs, rng);
  for (auto& b : out.bootstraps) b.obs = apply(spec, b.obs, rng);
  return out;
}

}  // namespace bae
