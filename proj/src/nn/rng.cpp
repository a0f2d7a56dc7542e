#include "lrpca/nn/rng.hpp"

#include <sstream>

#include "lrpca/errors.hpp"

namespace lrpca::nn {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream is(state);
  std::mt19937_64 engine;
  is >> engine;
  if (is.fail()) throw FormatError("rng: malformed generator state");
  engine_ = engine;
}

}  // namespace lrpca::nn
