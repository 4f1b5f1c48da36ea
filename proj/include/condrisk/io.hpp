#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "condrisk/market.hpp"
#include "condrisk/prob_space.hpp"

namespace condrisk {

/// Parsed model file: a probability space with a partition, optionally
/// extended to a market by a state-price density and payoffs.
struct ModelFile {
  FiniteSpace space;
  Partition partition;
  std::vector<RandomVariable> payoffs;          // empty when no market block
  std::optional<RandomVariable> state_price;
  std::string raw;                              // file bytes, for digests

  bool has_market() const { return state_price.has_value() && !payoffs.empty(); }

  MarketModel make_market() const {
    detail::require(has_market(), "model file has no market block (state_price and payoffs)");
    return MarketModel(space, partition, payoffs, *state_price);
  }
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// FNV-1a 64-bit digest, reported in machine-readable outputs so a result can
/// be tied to its exact input bytes.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Loads a model file:
/// {
///   "probs":       [p_1, ..., p_n],        strictly positive, sum 1
///   "atoms":       [a_1, ..., a_n],        atom index per outcome
///   "state_price": [psi_1, ..., psi_n],    optional
///   "payoffs":     [[y_11, ...], ...]      optional, one row per asset
/// }
/// Structural violations raise std::invalid_argument naming the offending field.
inline ModelFile load_model(const std::string& path) {
  const std::string raw = read_text_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": not valid JSON (" + e.what() + ")");
  }

  const auto field = [&](const char* name) -> const nlohmann::json& {
    if (!doc.contains(name))
      throw std::invalid_argument(path + ": missing required field '" + name + "'");
    return doc.at(name);
  };
  const auto numbers = [&](const nlohmann::json& node, const char* name) {
    if (!node.is_array())
      throw std::invalid_argument(path + ": field '" + name + "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(node.size());
    for (const auto& v : node) {
      if (!v.is_number())
        throw std::invalid_argument(path + ": field '" + name + "' must be an array of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  };

  const std::vector<double> probs = numbers(field("probs"), "probs");
  std::vector<std::size_t> atoms;
  {
    const auto& node = field("atoms");
    if (!node.is_array())
      throw std::invalid_argument(path + ": field 'atoms' must be an array of atom indices");
    for (const auto& v : node) {
      if (!v.is_number_unsigned())
        throw std::invalid_argument(path + ": field 'atoms' must hold nonnegative integers");
      atoms.push_back(v.get<std::size_t>());
    }
    if (atoms.size() != probs.size())
      throw std::invalid_argument(path + ": 'atoms' and 'probs' must have equal length");
  }
  std::size_t atom_count = 0;
  for (std::size_t a : atoms) atom_count = std::max(atom_count, a + 1);

  try {
    ModelFile mf{FiniteSpace(probs), Partition(std::move(atoms), atom_count), {}, {}, raw};
    if (doc.contains("state_price"))
      mf.state_price = RandomVariable(numbers(doc.at("state_price"), "state_price"));
    if (doc.contains("payoffs")) {
      const auto& rows = doc.at("payoffs");
      if (!rows.is_array() || rows.empty())
        throw std::invalid_argument(path + ": field 'payoffs' must be a nonempty array of rows");
      for (std::size_t j = 0; j < rows.size(); ++j)
        mf.payoffs.emplace_back(numbers(rows.at(j), "payoffs"));
    }
    if (mf.state_price && mf.state_price->size() != mf.space.outcome_count())
      throw std::invalid_argument(path + ": 'state_price' length must match 'probs'");
    for (const auto& y : mf.payoffs)
      if (y.size() != mf.space.outcome_count())
        throw std::invalid_argument(path + ": every 'payoffs' row must match 'probs' in length");
    if (!mf.payoffs.empty() && !mf.state_price)
      throw std::invalid_argument(path + ": 'payoffs' given without 'state_price'");
    if (mf.state_price && mf.payoffs.empty())
      throw std::invalid_argument(path + ": 'state_price' given without 'payoffs'");
    return mf;
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    if (what.rfind(path, 0) == 0) throw;
    throw std::invalid_argument(path + ": " + what);
  }
}

}  // namespace condrisk
