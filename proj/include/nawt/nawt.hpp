#pragma once

#include "nawt/error.hpp"
#include "nawt/numerics.hpp"
#include "nawt/model.hpp"
#include "nawt/solver.hpp"
#include "nawt/gmm.hpp"
#include "nawt/estimands.hpp"
#include "nawt/parallel.hpp"
#include "nawt/inference.hpp"
#include "nawt/simulation.hpp"
