#ifndef SECTX_LATTICE_HPP_
#define SECTX_LATTICE_HPP_

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sectx::lattice {

using Principal = std::string;
using PrincipalSet = std::set<Principal>;

/// Reader/writer principal-set security label. Information flows toward
/// labels with fewer readers and fewer writers (more confidential, more
/// tightly controlled).
class Label {
 public:
  Label() = default;
  Label(PrincipalSet readers, PrincipalSet writers)
      : readers_(std::move(readers)), writers_(std::move(writers)) {
    for (const auto& w : writers_) {
      if (!readers_.count(w)) {
        throw std::invalid_argument("label writer '" + w +
                                    "' is not also a reader");
      }
    }
  }

  static Label bottom(const PrincipalSet& universe) {
    return Label(universe, universe);
  }
  static Label top() { return Label({}, {}); }

  const PrincipalSet& readers() const { return readers_; }
  const PrincipalSet& writers() const { return writers_; }

  bool operator==(const Label& o) const = default;
  auto operator<=>(const Label& o) const = default;

  std::string str() const;

 private:
  PrincipalSet readers_;
  PrincipalSet writers_;
};

/// Equivalence class of labels by who may observe an abort of an access:
/// the principals authorized to read or write the field.
class ConflictLabel {
 public:
  ConflictLabel() = default;
  explicit ConflictLabel(PrincipalSet principals)
      : principals_(std::move(principals)) {}

  const PrincipalSet& principals() const { return principals_; }

  /// Label a conflict label acts as when checked against a pc or a
  /// location label: everyone in the class may read and write.
  Label as_label() const { return Label(principals_, principals_); }

  bool operator==(const ConflictLabel& o) const = default;
  auto operator<=>(const ConflictLabel& o) const = default;

  std::string str() const;

 private:
  PrincipalSet principals_;
};

enum class StageOrder { Before, After, Same, Incomparable };

bool flows_to(const Label& l1, const Label& l2);
Label join(const Label& l1, const Label& l2);
Label meet(const Label& l1, const Label& l2);
ConflictLabel conflict_label_of(const Label& field_label);
StageOrder stage_order(const ConflictLabel& cl1, const ConflictLabel& cl2);

/// All subsets of `universe` as reader sets paired with all writer subsets
/// of each reader set; the full label lattice over a principal universe.
std::vector<Label> all_labels(const PrincipalSet& universe);

}  // namespace sectx::lattice

#endif  // SECTX_LATTICE_HPP_
