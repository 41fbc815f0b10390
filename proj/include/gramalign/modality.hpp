#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "gramalign/error.hpp"

namespace gramalign {

/// Fixed modality order; also the tie-breaking order of the scheduler.
enum class Modality : std::uint8_t { Smiles = 0, Text = 1, Hta = 2, Protein = 3 };

inline constexpr std::size_t kNumModalities = 4;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {Modality::Smiles, Modality::Text, Modality::Hta,
                                                                       Modality::Protein};

constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

constexpr std::string_view name_of(Modality m) {
  switch (m) {
    case Modality::Smiles: return "smiles";
    case Modality::Text: return "text";
    case Modality::Hta: return "hta";
    case Modality::Protein: return "protein";
  }
  return "?";
}

inline Modality modality_from_code(std::uint8_t code) {
  require(code < kNumModalities, ErrorCode::InvalidArgument, "unknown modality code " + std::to_string(code));
  return static_cast<Modality>(code);
}

inline Modality modality_from_name(std::string_view name) {
  for (Modality m : kAllModalities) {
    if (name_of(m) == name) return m;
  }
  fail(ErrorCode::InvalidArgument, "unknown modality '" + std::string(name) + "'");
}

/// Encoder output widths of the frozen backbones.
constexpr std::size_t default_input_dim(Modality m) { return m == Modality::Protein ? 1280 : 768; }

}  // namespace gramalign
