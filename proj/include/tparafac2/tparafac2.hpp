#ifndef TPARAFAC2_TPARAFAC2_HPP_
#define TPARAFAC2_TPARAFAC2_HPP_

#include "tparafac2/cmf.hpp"
#include "tparafac2/core.hpp"
#include "tparafac2/evaluation.hpp"
#include "tparafac2/experiments.hpp"
#include "tparafac2/kernels.hpp"
#include "tparafac2/linalg.hpp"
#include "tparafac2/slab_io.hpp"
#include "tparafac2/solver.hpp"
#include "tparafac2/synthgen.hpp"

#endif  // TPARAFAC2_TPARAFAC2_HPP_
