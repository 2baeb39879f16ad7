#include "ig3d/instruct.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

namespace ig3d {

namespace {

constexpr double kDefaultTintStrength = 0.8;
constexpr double kDefaultBrightnessPercent = 20.0;
constexpr double kContrastIncrease = 1.5;
constexpr std::array<double, 3> kLuma{0.2126, 0.7152, 0.0722};

const char* kSupportedForms =
    "supported forms: 'make it <color>' (red, green, blue, white, black, yellow, orange, purple); "
    "'brighten [by <p>%]'; 'darken [by <p>%]'; 'increase contrast'; 'make it grayscale' | "
    "'turn it into grayscale'; 'invert the colors'; 'shift the hue by <d> degrees'; 'keep it the same'; "
    "clauses joined by 'and'";

std::string normalize(const std::string& text) {
  std::string out;
  bool space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
  return out;
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

EditOp parse_clause(const std::string& clause) {
  static const std::regex make_color(R"(make it (\w+))");
  static const std::regex gray(R"((make it|turn it into) (grayscale|greyscale))");
  static const std::regex bright(R"((brighten|darken)( it)?( by (\d+(\.\d+)?) ?%)?)");
  static const std::regex contrast(R"(increase (the )?contrast)");
  static const std::regex invert(R"(invert (the )?colou?rs)");
  static const std::regex hue(R"(shift (the )?hue by (-?\d+(\.\d+)?) degrees?)");
  std::smatch m;

  if (clause == "keep it the same") return Identity{};
  if (std::regex_match(clause, m, gray)) return Grayscale{};
  if (std::regex_match(clause, m, make_color)) {
    for (const auto& [name, rgb] : color_table()) {
      if (name == m[1].str()) return Tint{rgb, kDefaultTintStrength};
    }
    throw UnknownInstructionError("unknown color '" + m[1].str() + "'; " + kSupportedForms);
  }
  if (std::regex_match(clause, m, bright)) {
    const double pct = m[4].matched ? std::stod(m[4].str()) : kDefaultBrightnessPercent;
    const double factor = m[1].str() == "brighten" ? 1.0 + pct / 100.0 : 1.0 - pct / 100.0;
    if (!(factor > 0.0)) throw UnknownInstructionError(std::string("darken percentage must be below 100%; ") + kSupportedForms);
    return Brightness{factor};
  }
  if (std::regex_match(clause, m, contrast)) return Contrast{kContrastIncrease};
  if (std::regex_match(clause, m, invert)) return Invert{};
  if (std::regex_match(clause, m, hue)) return HueShift{std::stod(m[2].str())};
  throw UnknownInstructionError("unknown instruction '" + clause + "'; " + kSupportedForms);
}

void check_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(what) + " must lie in [0, 1]");
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / d + 2.0);
    } else {
      h = 60.0 * ((r - g) / d + 4.0);
    }
  }
  if (h < 0.0) h += 360.0;
  return {h, mx > 0.0 ? d / mx : 0.0, mx};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (double& ch : rgb) ch = std::clamp(ch + m, 0.0, 1.0);
  return rgb;
}

/// Apply a non-compose op to one pixel.
struct PixelEdit {
  std::array<double, 3>& px;

  void operator()(const Tint& t) const {
    for (int c = 0; c < 3; ++c) px[c] = (1.0 - t.strength) * px[c] + t.strength * t.color[c];
  }
  void operator()(const Brightness& b) const {
    for (double& v : px) v = std::clamp(b.factor * v, 0.0, 1.0);
  }
  void operator()(const Contrast& k) const {
    for (double& v : px) v = std::clamp(0.5 + k.factor * (v - 0.5), 0.0, 1.0);
  }
  void operator()(const Grayscale&) const {
    const double y = kLuma[0] * px[0] + kLuma[1] * px[1] + kLuma[2] * px[2];
    px = {y, y, y};
  }
  void operator()(const Invert&) const {
    for (double& v : px) v = 1.0 - v;
  }
  void operator()(const HueShift& h) const {
    auto hsv = rgb_to_hsv(px[0], px[1], px[2]);
    double hue = std::fmod(hsv[0] + h.degrees, 360.0);
    if (hue < 0.0) hue += 360.0;
    px = hsv_to_rgb(hue, hsv[1], hsv[2]);
  }
  void operator()(const Identity&) const {}
  void operator()(const Compose& c) const {
    for (const auto& op : c.ops) std::visit(*this, op.op);
  }
};

}  // namespace

bool Compose::operator==(const Compose& other) const { return ops == other.ops; }

void EditOp::validate() const {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Tint>) {
          for (double c : v.color) check_unit(c, "tint color");
          check_unit(v.strength, "tint strength");
        } else if constexpr (std::is_same_v<T, Brightness> || std::is_same_v<T, Contrast>) {
          if (!(v.factor > 0.0) || !std::isfinite(v.factor)) throw ValidationError("edit factor must be > 0");
        } else if constexpr (std::is_same_v<T, HueShift>) {
          if (!std::isfinite(v.degrees)) throw ValidationError("hue shift must be finite");
        } else if constexpr (std::is_same_v<T, Compose>) {
          if (v.ops.empty()) throw ValidationError("compose needs at least one edit");
          for (const auto& op : v.ops) op.validate();
        }
      },
      op);
}

const std::vector<std::pair<std::string, Rgb>>& color_table() {
  static const std::vector<std::pair<std::string, Rgb>> table = {
      {"red", {1, 0, 0}},   {"green", {0, 1, 0}},     {"blue", {0, 0, 1}},     {"white", {1, 1, 1}},
      {"black", {0, 0, 0}}, {"yellow", {1, 1, 0}},    {"orange", {1, 0.5, 0}}, {"purple", {0.5, 0, 0.5}},
  };
  return table;
}

EditOp parse_instruction(const std::string& text) {
  const std::string norm = normalize(text);
  if (norm.empty()) throw UnknownInstructionError(std::string("empty instruction; ") + kSupportedForms);
  std::vector<EditOp> clauses;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = norm.find(" and ", start);
    clauses.push_back(parse_clause(norm.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 5;
  }
  if (clauses.size() == 1) return clauses.front();
  return Compose{std::move(clauses)};
}

std::string to_string(const EditOp& edit) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Tint>) {
          return "tint(" + fmt_num(v.color[0]) + "," + fmt_num(v.color[1]) + "," + fmt_num(v.color[2]) + ";" +
                 fmt_num(v.strength) + ")";
        } else if constexpr (std::is_same_v<T, Brightness>) {
          return "brightness(" + fmt_num(v.factor) + ")";
        } else if constexpr (std::is_same_v<T, Contrast>) {
          return "contrast(" + fmt_num(v.factor) + ")";
        } else if constexpr (std::is_same_v<T, Grayscale>) {
          return "grayscale";
        } else if constexpr (std::is_same_v<T, Invert>) {
          return "invert";
        } else if constexpr (std::is_same_v<T, HueShift>) {
          return "hue_shift(" + fmt_num(v.degrees) + ")";
        } else if constexpr (std::is_same_v<T, Identity>) {
          return "identity";
        } else {
          std::string s = "compose[";
          for (std::size_t i = 0; i < v.ops.size(); ++i) s += (i ? ", " : "") + to_string(v.ops[i]);
          return s + "]";
        }
      },
      edit.op);
}

Tensor apply_edit(const EditOp& op, const Tensor& image) {
  op.validate();
  if (image.channels != 3) throw ShapeMismatchError("apply_edit expects 3 channels, got " + image.shape_string());
  for (double v : image.data) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("apply_edit input must lie in [0, 1]");
  }
  Tensor out = image;
  const std::size_t plane = image.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    std::array<double, 3> px{image.data[p], image.data[plane + p], image.data[2 * plane + p]};
    std::visit(PixelEdit{px}, op.op);
    for (int c = 0; c < 3; ++c) out.data[c * plane + p] = px[c];
  }
  return out;
}

Tensor InstructionMeanRule::operator()(const std::optional<std::string>& instruction,
                                       const std::optional<Tensor>& source_image, int height, int width) const {
  if (!source_image) {
    Tensor null_image(3, height, width, null_level);
    if (!instruction) return null_image;
    return apply_edit(parse_instruction(*instruction), null_image);
  }
  // Rendered images can overshoot [0, 1] by rounding only.
  Tensor src = *source_image;
  for (double& v : src.data) v = std::clamp(v, 0.0, 1.0);
  if (!instruction) return src;

  const Tensor edited = apply_edit(parse_instruction(*instruction), src);
  const std::size_t plane = src.plane();
  std::vector<double> dist(plane, 0.0);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) dist[p] = std::max(dist[p], std::abs(src.data[c * plane + p] - background[c]));
  }
  const double peak = *std::max_element(dist.begin(), dist.end());
  if (peak < 1e-6) return src;

  Tensor out = src;
  for (std::size_t p = 0; p < plane; ++p) {
    const double u = std::clamp((dist[p] / peak - coverage_low) / (coverage_high - coverage_low), 0.0, 1.0);
    const double gate = u * u * (3.0 - 2.0 * u);
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = c * plane + p;
      out.data[i] = src.data[i] + gate * (edited.data[i] - src.data[i]);
    }
  }
  return out;
}

MeanFn instruction_mean_fn(InstructionMeanRule rule) {
  if (!(rule.coverage_high > rule.coverage_low)) throw ValidationError("mean rule coverage_high must exceed coverage_low");
  return [rule](const std::optional<std::string>& instruction, const std::optional<Tensor>& source_image, int height,
                int width) { return rule(instruction, source_image, height, width); };
}

}  // namespace ig3d
