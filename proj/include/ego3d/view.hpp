#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ego3d {

/// Camera directions of an ego rig, in clockwise ring order starting at the
/// front camera. A rig may use any subset; each label keeps its canonical
/// angle (ring_index * 45 degrees) regardless of which others are present.
enum class View : std::uint8_t {
  Front,
  FrontRight,
  Right,
  BackRight,
  Back,
  BackLeft,
  Left,
  FrontLeft,
};

inline constexpr std::array<View, 8> kViewRing = {
    View::Front,    View::FrontRight, View::Right, View::BackRight,
    View::Back,     View::BackLeft,   View::Left,  View::FrontLeft,
};

constexpr int ring_index(View v) noexcept { return static_cast<int>(v); }

/// Identifier used in files: "Front", "FrontRight", ...
std::string_view view_id(View v) noexcept;

/// Human-facing label used in questions and prompts: "Front", "Front-Right", ...
std::string_view view_label(View v) noexcept;

/// Lenient parse: case-insensitive, ignores '-', '_' and spaces, and accepts
/// a leading "cam" (so "CAM_FRONT_LEFT", "front-left" and "FrontLeft" all match).
std::optional<View> parse_view(std::string_view text) noexcept;

/// Like parse_view but throws ValidationError on unknown labels.
View view_from_string(std::string_view text);

}  // namespace ego3d
