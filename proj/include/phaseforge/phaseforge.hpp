#pragma once

#include "config.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "fptnet.hpp"
#include "fptnet_spec.hpp"
#include "fringe.hpp"
#include "grid.hpp"
#include "nn/adam.hpp"
#include "nn/checkpoint.hpp"
#include "nn/network.hpp"
#include "nn/ops.hpp"
#include "nn/tensor.hpp"
#include "pipeline.hpp"
#include "random.hpp"
#include "raster_io.hpp"
#include "surface.hpp"
