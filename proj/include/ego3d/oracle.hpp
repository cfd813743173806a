#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "ego3d/qa.hpp"

namespace ego3d::qa {

struct OracleAnswer {
  std::size_t index = 0;  // MultiChoice / YesNo
  double value = 0.0;     // meters for AbsoluteMeters, else the recomputed quantity
};

/// Answers an item from scene geometry alone, ignoring the stored answer.
/// `scale` multiplies every scene coordinate and the motion displacement,
/// which is how scale invariance of the comparative categories is checked.
/// Throws ValidationError when the item names objects absent from the scene.
OracleAnswer oracle_answer(const QAItem& item, const SceneSource& scene, double scale = 1.0);

/// Reply text in the prompt's think/answer format carrying the oracle answer.
std::string oracle_reply(const QAItem& item, const OracleAnswer& answer);

using SceneIndex = std::map<std::string, SceneSource, std::less<>>;

SceneIndex index_scenes(std::span<const SceneSource> scenes);

}  // namespace ego3d::qa
