#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace usermodel {

enum class Attribute { kAge, kGender, kEducation, kSocioeco };

inline constexpr std::array<Attribute, 4> kAllAttributes = {
    Attribute::kAge, Attribute::kGender, Attribute::kEducation, Attribute::kSocioeco};

// Identifier used in files and on the wire: age, gender, education, socioeco.
std::string_view attribute_name(Attribute a);
// Wording used inside prompts: age, gender, education, socioeconomic status.
std::string_view attribute_display(Attribute a);
Attribute parse_attribute(std::string_view name);

// Ordered subcategory identifiers, e.g. child, adolescent, adult, older-adult.
const std::vector<std::string>& subcategories(Attribute a);
// Human wording, e.g. "older adult", "college and beyond".
std::string subcategory_display(Attribute a, std::string_view subcategory);
// Index in subcategories(a); throws Error(kInvalidArgument) when unknown.
std::size_t subcategory_index(Attribute a, std::string_view subcategory);
bool is_subcategory(Attribute a, std::string_view subcategory);

}  // namespace usermodel
