#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "irrigation/error.hpp"

namespace irrigation::csv {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) {
      field.pop_back();
    }
    auto first = field.find_first_not_of(' ');
    out.push_back(first == std::string::npos ? std::string{}
                                             : field.substr(first));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// `source` names the file kind in the error, e.g. "weather csv".
inline double parse_number(const std::string& text, const std::string& source,
                           std::size_t row, const std::string& column) {
  try {
    std::size_t used = 0;
    double value = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(value)) throw std::exception();
    return value;
  } catch (const std::exception&) {
    std::ostringstream msg;
    msg << source << " row " << row << ", column '" << column
        << "': not a number: '" << text << "'";
    throw Error(msg.str());
  }
}

}  // namespace irrigation::csv
