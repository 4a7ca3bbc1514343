#pragma once

// Umbrella header.

#include "assignment.hpp"
#include "config.hpp"
#include "engine.hpp"
#include "errors.hpp"
#include "exit.hpp"
#include "experiments.hpp"
#include "geometry.hpp"
#include "interaction.hpp"
#include "ldp.hpp"
#include "meanfield.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "polynomial.hpp"
#include "recorder.hpp"
#include "rng.hpp"
#include "vecmath.hpp"
