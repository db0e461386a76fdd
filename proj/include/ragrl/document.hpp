#pragma once

#include <string>

namespace ragrl {

struct Document {
  std::string id;
  std::string title;
  std::string text;
};

}  // namespace ragrl
