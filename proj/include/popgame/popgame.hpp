#pragma once

// Umbrella header: imitation dynamics on population games — games and
// potentials, revision rules, simplex-preserving integration, equilibrium
// enumeration, property checks, and the scenario-file driver.

#include "popgame/types.hpp"
#include "popgame/random.hpp"
#include "popgame/configuration.hpp"
#include "popgame/costs.hpp"
#include "popgame/potential.hpp"
#include "popgame/game.hpp"
#include "popgame/dynamics.hpp"
#include "popgame/equilibria.hpp"
#include "popgame/integrate.hpp"
#include "popgame/checks.hpp"
#include "popgame/scenario.hpp"
#include "popgame/runner.hpp"
