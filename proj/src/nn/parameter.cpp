#include "lrpca/nn/parameter.hpp"

#include <cmath>
#include <set>

namespace lrpca::nn {

template <typename T>
void require_unique_names(const ParameterList<T>& params) {
  std::set<std::string> seen;
  for (const auto* p : params) {
    if (!seen.insert(p->name).second) {
      throw ConfigError("duplicate parameter name '" + p->name + "'");
    }
  }
}

template <typename T>
void kaiming_normal(Array4<T>& weights, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (T& v : weights.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

template void require_unique_names(const ParameterList<float>&);
template void require_unique_names(const ParameterList<double>&);
template void kaiming_normal(Array4<float>&, std::size_t, Rng&);
template void kaiming_normal(Array4<double>&, std::size_t, Rng&);

}  // namespace lrpca::nn
