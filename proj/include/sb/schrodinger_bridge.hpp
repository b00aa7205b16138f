// Umbrella header for the bridge sampler library.

#pragma once

#include "sb/adam.hpp"
#include "sb/bridge.hpp"
#include "sb/embedding.hpp"
#include "sb/evaluation.hpp"
#include "sb/gaussian_mixture.hpp"
#include "sb/io.hpp"
#include "sb/matrix.hpp"
#include "sb/mlp.hpp"
#include "sb/ratio_model.hpp"
#include "sb/rng.hpp"
#include "sb/score_model.hpp"
