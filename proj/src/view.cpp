#include "ego3d/view.hpp"

#include <cctype>

#include "ego3d/errors.hpp"

namespace ego3d {

namespace {

constexpr std::array<std::string_view, 8> kIds = {
    "Front", "FrontRight", "Right", "BackRight",
    "Back",  "BackLeft",   "Left",  "FrontLeft",
};

constexpr std::array<std::string_view, 8> kLabels = {
    "Front", "Front-Right", "Right", "Back-Right",
    "Back",  "Back-Left",   "Left",  "Front-Left",
};

std::string normalize(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (out.rfind("cam", 0) == 0) out.erase(0, 3);
  return out;
}

}  // namespace

std::string_view view_id(View v) noexcept { return kIds[static_cast<std::size_t>(v)]; }

std::string_view view_label(View v) noexcept {
  return kLabels[static_cast<std::size_t>(v)];
}

std::optional<View> parse_view(std::string_view text) noexcept {
  const std::string key = normalize(text);
  for (View v : kViewRing) {
    if (normalize(view_id(v)) == key) return v;
  }
  return std::nullopt;
}

View view_from_string(std::string_view text) {
  if (auto v = parse_view(text)) return *v;
  throw ValidationError("unknown view label '" + std::string(text) + "'");
}

}  // namespace ego3d
