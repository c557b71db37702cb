#pragma once

// Everything except the command layer.
#include "core.hpp"
#include "exact.hpp"
#include "geometry.hpp"
#include "horseshoe.hpp"
#include "integrate.hpp"
#include "manifolds.hpp"
#include "models.hpp"
#include "tsing.hpp"
