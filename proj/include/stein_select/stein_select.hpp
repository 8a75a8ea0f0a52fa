#pragma once

#include "stein_select/calibrate.hpp"
#include "stein_select/common.hpp"
#include "stein_select/data.hpp"
#include "stein_select/experiments.hpp"
#include "stein_select/io.hpp"
#include "stein_select/kernel.hpp"
#include "stein_select/nksd.hpp"
#include "stein_select/optimize.hpp"
#include "stein_select/random.hpp"
#include "stein_select/score_models.hpp"
#include "stein_select/selection.hpp"
#include "stein_select/svc.hpp"
