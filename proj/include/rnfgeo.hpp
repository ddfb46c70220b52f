#pragma once

#include "rnfgeo/errors.hpp"
#include "rnfgeo/random.hpp"
#include "rnfgeo/quadrature.hpp"
#include "rnfgeo/stats.hpp"
#include "rnfgeo/parallel.hpp"
#include "rnfgeo/kernels.hpp"
#include "rnfgeo/spectral.hpp"
#include "rnfgeo/synthesis.hpp"
#include "rnfgeo/geometry.hpp"
#include "rnfgeo/network.hpp"
#include "rnfgeo/harness.hpp"
