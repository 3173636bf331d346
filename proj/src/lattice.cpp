#include "sectx/lattice.hpp"

#include <algorithm>
#include <iterator>
#include <sstream>

namespace sectx::lattice {

namespace {

bool subset(const PrincipalSet& a, const PrincipalSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

PrincipalSet intersect(const PrincipalSet& a, const PrincipalSet& b) {
  PrincipalSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::inserter(out, out.begin()));
  return out;
}

PrincipalSet unite(const PrincipalSet& a, const PrincipalSet& b) {
  PrincipalSet out = a;
  out.insert(b.begin(), b.end());
  return out;
}

std::string set_str(const PrincipalSet& s) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& p : s) {
    if (!first) os << ',';
    os << p;
    first = false;
  }
  os << '}';
  return os.str();
}

}  // namespace

std::string Label::str() const {
  return "{r:" + set_str(readers_) + ",w:" + set_str(writers_) + "}";
}

std::string ConflictLabel::str() const { return set_str(principals_); }

bool flows_to(const Label& l1, const Label& l2) {
  return subset(l2.readers(), l1.readers()) &&
         subset(l2.writers(), l1.writers());
}

Label join(const Label& l1, const Label& l2) {
  return Label(intersect(l1.readers(), l2.readers()),
               intersect(l1.writers(), l2.writers()));
}

Label meet(const Label& l1, const Label& l2) {
  return Label(unite(l1.readers(), l2.readers()),
               unite(l1.writers(), l2.writers()));
}

ConflictLabel conflict_label_of(const Label& field_label) {
  return ConflictLabel(unite(field_label.readers(), field_label.writers()));
}

StageOrder stage_order(const ConflictLabel& cl1, const ConflictLabel& cl2) {
  const auto& a = cl1.principals();
  const auto& b = cl2.principals();
  if (a == b) return StageOrder::Same;
  if (subset(b, a)) return StageOrder::Before;
  if (subset(a, b)) return StageOrder::After;
  return StageOrder::Incomparable;
}

std::vector<Label> all_labels(const PrincipalSet& universe) {
  std::vector<Principal> ps(universe.begin(), universe.end());
  const size_t n = ps.size();
  std::vector<Label> out;
  for (size_t rbits = 0; rbits < (1u << n); ++rbits) {
    PrincipalSet readers;
    std::vector<Principal> rvec;
    for (size_t i = 0; i < n; ++i) {
      if (rbits & (1u << i)) {
        readers.insert(ps[i]);
        rvec.push_back(ps[i]);
      }
    }
    const size_t m = rvec.size();
    for (size_t wbits = 0; wbits < (1u << m); ++wbits) {
      PrincipalSet writers;
      for (size_t i = 0; i < m; ++i) {
        if (wbits & (1u << i)) writers.insert(rvec[i]);
      }
      out.emplace_back(readers, writers);
    }
  }
  return out;
}

}  // namespace sectx::lattice
