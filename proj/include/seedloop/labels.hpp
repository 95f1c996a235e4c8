#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seedloop {

/// Index of a class inside a LabelSet. Canonical order is the LabelSet order.
using ClassIndex = int;

/// Ordered list of class names. All probability vectors and confusion-matrix
/// axes are indexed in this order.
class LabelSet {
public:
  /// The corn seed set: broken < discolored < pure < silkcut.
  static LabelSet corn();

  LabelSet(std::vector<std::string> names, std::string pure_name);

  std::size_t size() const { return names_.size(); }
  const std::string& name(ClassIndex c) const { return names_.at(static_cast<std::size_t>(c)); }
  const std::vector<std::string>& names() const { return names_; }

  /// Throws std::invalid_argument for names outside the set.
  ClassIndex parse(std::string_view name) const;
  std::optional<ClassIndex> find(std::string_view name) const;

  /// Index of the class that counts as "pure" for the binary purity collapse.
  ClassIndex pure_index() const { return pure_; }

  bool operator==(const LabelSet& other) const = default;

private:
  std::vector<std::string> names_;
  ClassIndex pure_ = 0;
};

namespace corn {
inline constexpr ClassIndex broken = 0;
inline constexpr ClassIndex discolored = 1;
inline constexpr ClassIndex pure = 2;
inline constexpr ClassIndex silkcut = 3;
} // namespace corn

enum class Purity { pure, impure };

/// Collapses a class onto pure/impure. Only the set's pure class maps to pure.
Purity physical_purity(const LabelSet& labels, ClassIndex c);

enum class View { top, bottom };
enum class Source { captured, generated };

std::string_view to_string(View v);
std::string_view to_string(Source s);
std::string_view to_string(Purity p);
View parse_view(std::string_view s);
Source parse_source(std::string_view s);

} // namespace seedloop
