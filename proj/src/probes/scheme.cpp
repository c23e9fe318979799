#include "usermodel/probes/scheme.hpp"

#include <algorithm>

#include "usermodel/error.hpp"

namespace usermodel {

std::string_view attribute_name(Attribute a) {
  switch (a) {
    case Attribute::kAge: return "age";
    case Attribute::kGender: return "gender";
    case Attribute::kEducation: return "education";
    case Attribute::kSocioeco: return "socioeco";
  }
  return "age";
}

std::string_view attribute_display(Attribute a) {
  switch (a) {
    case Attribute::kAge: return "age";
    case Attribute::kGender: return "gender";
    case Attribute::kEducation: return "education";
    case Attribute::kSocioeco: return "socioeconomic status";
  }
  return "age";
}

Attribute parse_attribute(std::string_view name) {
  for (Attribute a : kAllAttributes) {
    if (attribute_name(a) == name) return a;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown attribute '" + std::string(name) + "'");
}

const std::vector<std::string>& subcategories(Attribute a) {
  static const std::vector<std::string> age{"child", "adolescent", "adult", "older-adult"};
  static const std::vector<std::string> gender{"male", "female"};
  static const std::vector<std::string> education{"some-schooling", "high-school",
                                                  "college-and-beyond"};
  static const std::vector<std::string> socioeco{"lower", "middle", "upper"};
  switch (a) {
    case Attribute::kAge: return age;
    case Attribute::kGender: return gender;
    case Attribute::kEducation: return education;
    case Attribute::kSocioeco: return socioeco;
  }
  return age;
}

std::size_t subcategory_index(Attribute a, std::string_view subcategory) {
  const auto& subs = subcategories(a);
  auto it = std::find(subs.begin(), subs.end(), subcategory);
  if (it == subs.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown subcategory '" + std::string(subcategory) +
                                                 "' for " + std::string(attribute_name(a)));
  }
  return static_cast<std::size_t>(it - subs.begin());
}

bool is_subcategory(Attribute a, std::string_view subcategory) {
  const auto& subs = subcategories(a);
  return std::find(subs.begin(), subs.end(), subcategory) != subs.end();
}

std::string subcategory_display(Attribute a, std::string_view subcategory) {
  subcategory_index(a, subcategory);
  std::string out(subcategory);
  std::replace(out.begin(), out.end(), '-', ' ');
  return out;
}

}  // namespace usermodel
