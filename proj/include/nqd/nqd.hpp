#pragma once

#include "nqd/config.hpp"
#include "nqd/dependence.hpp"
#include "nqd/marginals.hpp"
#include "nqd/numeric.hpp"
#include "nqd/oracles.hpp"
#include "nqd/quadrature.hpp"
#include "nqd/rng.hpp"
#include "nqd/scaling.hpp"
#include "nqd/series.hpp"
#include "nqd/simulator.hpp"
#include "nqd/theorem1.hpp"
#include "nqd/truncation.hpp"
