#pragma once

#include <optional>
#include <string>

#include "triattn/tri_attention.hpp"

namespace triattn {

// Stacked-network attention path.
enum class NetMode { Bi, CBi, Tri };

inline const char* variantName(TriVariant v) {
  switch (v) {
    case TriVariant::TAdd: return "tadd";
    case TriVariant::TDP: return "tdp";
    case TriVariant::TSDP: return "tsdp";
    case TriVariant::TriliFull: return "trili-full";
    case TriVariant::TriliEconomic: return "trili-econ";
  }
  return "?";
}

inline const char* biVariantName(BiVariant v) {
  switch (v) {
    case BiVariant::Add: return "add";
    case BiVariant::DP: return "dp";
    case BiVariant::SDP: return "sdp";
    case BiVariant::Bili: return "bili";
  }
  return "?";
}

inline const char* integrationName(ValueIntegration i) {
  switch (i) {
    case ValueIntegration::Additive: return "add";
    case ValueIntegration::Multiplicative: return "mul";
    case ValueIntegration::Bilinear: return "bili";
  }
  return "?";
}

inline const char* modeName(NetMode m) {
  switch (m) {
    case NetMode::Bi: return "bi";
    case NetMode::CBi: return "c-bi";
    case NetMode::Tri: return "tri";
  }
  return "?";
}

inline std::optional<TriVariant> parseVariant(const std::string& s) {
  if (s == "tadd") return TriVariant::TAdd;
  if (s == "tdp") return TriVariant::TDP;
  if (s == "tsdp") return TriVariant::TSDP;
  if (s == "trili-full") return TriVariant::TriliFull;
  if (s == "trili-econ") return TriVariant::TriliEconomic;
  return std::nullopt;
}

inline std::optional<ValueIntegration> parseIntegration(const std::string& s) {
  if (s == "add") return ValueIntegration::Additive;
  if (s == "mul") return ValueIntegration::Multiplicative;
  if (s == "bili") return ValueIntegration::Bilinear;
  return std::nullopt;
}

inline std::optional<NetMode> parseMode(const std::string& s) {
  if (s == "bi") return NetMode::Bi;
  if (s == "c-bi") return NetMode::CBi;
  if (s == "tri") return NetMode::Tri;
  return std::nullopt;
}

}  // namespace triattn
