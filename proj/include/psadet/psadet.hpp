#pragma once

// Umbrella header.

#include "psadet/core_geometry.hpp"
#include "psadet/error.hpp"
#include "psadet/eval.hpp"
#include "psadet/fpc.hpp"
#include "psadet/grouping.hpp"
#include "psadet/kitti_io.hpp"
#include "psadet/mlp.hpp"
#include "psadet/parallel.hpp"
#include "psadet/point_cloud.hpp"
#include "psadet/rng.hpp"
#include "psadet/sampling.hpp"
#include "psadet/spatial_grid.hpp"
#include "psadet/synth.hpp"
#include "psadet/version.hpp"
#include "psadet/experiments.hpp"
