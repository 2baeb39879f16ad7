#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ig3d/diffusion.hpp"
#include "ig3d/error.hpp"
#include "ig3d/tensor.hpp"

namespace ig3d {

using Rgb = std::array<double, 3>;

struct EditOp;

struct Tint {
  Rgb color{};
  double strength = 0.8;
  bool operator==(const Tint&) const = default;
};
struct Brightness {
  double factor = 1.0;
  bool operator==(const Brightness&) const = default;
};
struct Contrast {
  double factor = 1.0;
  bool operator==(const Contrast&) const = default;
};
struct Grayscale {
  bool operator==(const Grayscale&) const = default;
};
struct Invert {
  bool operator==(const Invert&) const = default;
};
struct HueShift {
  double degrees = 0.0;
  bool operator==(const HueShift&) const = default;
};
struct Identity {
  bool operator==(const Identity&) const = default;
};
struct Compose {
  std::vector<EditOp> ops;
  bool operator==(const Compose& other) const;
};

/// A deterministic pixelwise image edit.
struct EditOp {
  std::variant<Tint, Brightness, Contrast, Grayscale, Invert, HueShift, Identity, Compose> op;

  EditOp() : op(Identity{}) {}
  template <typename T>
  EditOp(T value) : op(std::move(value)) {}  // NOLINT(google-explicit-constructor)

  bool operator==(const EditOp&) const = default;
  /// Throws ValidationError if a parameter is out of range.
  void validate() const;
};

class UnknownInstructionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Named colours understood by "make it <colour>".
const std::vector<std::pair<std::string, Rgb>>& color_table();

/// Parse an edit instruction (case-insensitive). See docs/instructions.md.
EditOp parse_instruction(const std::string& text);

/// Canonical text form, e.g. "compose[tint(1,0,0;0.8), brightness(1.2)]".
std::string to_string(const EditOp& op);

/// Apply an edit to a 3 x H x W image with values in [0, 1].
Tensor apply_edit(const EditOp& op, const Tensor& image);

/// Condition means for the Gaussian score provider:
///   (null, null)  -> constant `null_level` image
///   (null, image) -> the image
///   (text, image) -> image + m * (edit(image) - image)
///   (text, null)  -> edit applied to the null image
/// m is a per-pixel subject gate. A pixel's coverage is estimated as its
/// largest channel distance to the background divided by the largest such
/// distance in the image; m rises smoothly from 0 to 1 as the coverage goes
/// from coverage_low to coverage_high. Only pixels the subject (nearly) fully
/// covers are edited; background and partially covered edge pixels keep their
/// value, so strong text guidance has no reason to grow the silhouette.
struct InstructionMeanRule {
  double null_level = 0.5;
  Rgb background{1.0, 1.0, 1.0};
  double coverage_low = 0.8;
  double coverage_high = 0.95;

  Tensor operator()(const std::optional<std::string>& instruction, const std::optional<Tensor>& source_image,
                    int height, int width) const;
};

MeanFn instruction_mean_fn(InstructionMeanRule rule = {});

}  // namespace ig3d
