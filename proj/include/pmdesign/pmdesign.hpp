#ifndef PMDESIGN_PMDESIGN_HPP
#define PMDESIGN_PMDESIGN_HPP

#include "pmdesign/core.hpp"
#include "pmdesign/criteria.hpp"
#include "pmdesign/designs.hpp"
#include "pmdesign/experiment.hpp"
#include "pmdesign/matching.hpp"
#include "pmdesign/montecarlo.hpp"
#include "pmdesign/random.hpp"
#include "pmdesign/response.hpp"

#endif  // PMDESIGN_PMDESIGN_HPP
