#pragma once

#include "hil/core.hpp"
#include "hil/em.hpp"
#include "hil/experiment.hpp"
#include "hil/instances.hpp"
#include "hil/oracle.hpp"
#include "hil/rng.hpp"
#include "hil/simulator.hpp"
#include "hil/smoothing.hpp"
#include "hil/stability.hpp"
