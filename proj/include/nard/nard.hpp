#pragma once

// Umbrella header for the nonanticipative rate-distortion library.

#include "nard/causal_filter.hpp"
#include "nard/csv.hpp"
#include "nard/errors.hpp"
#include "nard/kernel_solver.hpp"
#include "nard/matrix.hpp"
#include "nard/numerics.hpp"
#include "nard/rd_curve.hpp"
#include "nard/rng.hpp"
#include "nard/source_model.hpp"
#include "nard/waterfill.hpp"
