#pragma once

#include "rvp/cli.hpp"
#include "rvp/compare.hpp"
#include "rvp/config.hpp"
#include "rvp/error.hpp"
#include "rvp/levers.hpp"
#include "rvp/oracle.hpp"
#include "rvp/parallel.hpp"
#include "rvp/policy.hpp"
#include "rvp/population.hpp"
#include "rvp/predicate.hpp"
#include "rvp/report.hpp"
#include "rvp/rng.hpp"
#include "rvp/service.hpp"
#include "rvp/synth.hpp"
#include "rvp/utility.hpp"
#include "rvp/version.hpp"
