#pragma once

// Umbrella header for the resonator characterization toolkit.

#include "lerkit/constants.hpp"
#include "lerkit/errors.hpp"
#include "lerkit/types.hpp"
#include "lerkit/notch_model.hpp"
#include "lerkit/circle_fit.hpp"
#include "lerkit/resfit.hpp"
#include "lerkit/mattis_bardeen.hpp"
#include "lerkit/tls.hpp"
#include "lerkit/nonlinear.hpp"
#include "lerkit/stats.hpp"
#include "lerkit/rng.hpp"
#include "lerkit/synth.hpp"
#include "lerkit/segmentation.hpp"
#include "lerkit/io.hpp"
#include "lerkit/parallel.hpp"
