#pragma once

// Default data files from data/, compiled into the library.

#include <string_view>

namespace prefmem::data {

std::string_view rules_txt();
std::string_view topics_txt();
std::string_view slots_txt();
std::string_view templates_txt();
std::string_view casual_templates_txt();

}  // namespace prefmem::data
