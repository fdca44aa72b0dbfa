#pragma once

#include "errors.hpp"
#include "numerics.hpp"
#include "surface.hpp"
#include "surface_analysis.hpp"
#include "layer_metric.hpp"
#include "quadratic_forms.hpp"
#include "certifier.hpp"
#include "lobpcg.hpp"
#include "spectral.hpp"
#include "config.hpp"
#include "run.hpp"
