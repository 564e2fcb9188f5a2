#pragma once

#include "averaged_solver.hpp"
#include "config.hpp"
#include "coupled_solver.hpp"
#include "errors.hpp"
#include "frozen_fast.hpp"
#include "harness.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "spectral.hpp"
#include "stats.hpp"
