#pragma once

#include "condrisk/counterexamples.hpp"
#include "condrisk/io.hpp"
#include "condrisk/market.hpp"
#include "condrisk/optimize.hpp"
#include "condrisk/prob_space.hpp"
#include "condrisk/quadrature.hpp"
#include "condrisk/risk.hpp"
#include "condrisk/rng.hpp"
