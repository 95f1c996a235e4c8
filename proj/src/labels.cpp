#include "seedloop/labels.hpp"

#include <algorithm>

namespace seedloop {

LabelSet LabelSet::corn() { return LabelSet({"broken", "discolored", "pure", "silkcut"}, "pure"); }

LabelSet::LabelSet(std::vector<std::string> names, std::string pure_name) : names_(std::move(names)) {
  if (names_.size() < 2) throw std::invalid_argument("label set needs at least 2 classes");
  auto sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("label set has duplicate class names");
  auto p = find(pure_name);
  if (!p) throw std::invalid_argument("pure class '" + pure_name + "' is not in the label set");
  pure_ = *p;
}

std::optional<ClassIndex> LabelSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<ClassIndex>(i);
  return std::nullopt;
}

ClassIndex LabelSet::parse(std::string_view name) const {
  if (auto c = find(name)) return *c;
  throw std::invalid_argument("unknown class label '" + std::string(name) + "'");
}

Purity physical_purity(const LabelSet& labels, ClassIndex c) {
  return c == labels.pure_index() ? Purity::pure : Purity::impure;
}

std::string_view to_string(View v) { return v == View::top ? "top" : "bottom"; }
std::string_view to_string(Source s) { return s == Source::captured ? "captured" : "generated"; }
std::string_view to_string(Purity p) { return p == Purity::pure ? "pure" : "impure"; }

View parse_view(std::string_view s) {
  if (s == "top") return View::top;
  if (s == "bottom") return View::bottom;
  throw std::invalid_argument("view must be \"top\" or \"bottom\", got '" + std::string(s) + "'");
}

Source parse_source(std::string_view s) {
  if (s == "captured") return Source::captured;
  if (s == "generated") return Source::generated;
  throw std::invalid_argument("source must be \"captured\" or \"generated\", got '" + std::string(s) + "'");
}

} // namespace seedloop
