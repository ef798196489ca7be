#include "pstab/common.hpp"

#include <algorithm>

namespace pstab {

std::size_t index_of(const Labels& labels, const std::string& label, const char* what) {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(ErrorCode::InvalidArgument, std::string("unknown ") + what + " '" + label + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

}  // namespace pstab
