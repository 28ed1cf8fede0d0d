// Umbrella header.

#pragma once

#include "subtrack/core.hpp"
#include "subtrack/inner_solver.hpp"
#include "subtrack/io.hpp"
#include "subtrack/metrics.hpp"
#include "subtrack/subspace.hpp"
#include "subtrack/synth.hpp"
#include "subtrack/tracker.hpp"
