#include "owmmd/random.hpp"

#include "owmmd/special_functions.hpp"

namespace owmmd {

double Rng::normal() { return inv_norm_cdf(uniform_open()); }

}  // namespace owmmd
