#pragma once

#include "bmpc/errors.hpp"
#include "bmpc/mode.hpp"
#include "bmpc/time_series.hpp"
#include "bmpc/random.hpp"
#include "bmpc/solar.hpp"
#include "bmpc/regressors.hpp"
#include "bmpc/nnls.hpp"
#include "bmpc/armax.hpp"
#include "bmpc/plant.hpp"
#include "bmpc/weather.hpp"
#include "bmpc/simulation.hpp"
#include "bmpc/forest.hpp"
#include "bmpc/icnn.hpp"
#include "bmpc/qp.hpp"
#include "bmpc/mpc.hpp"
#include "bmpc/eval.hpp"
#include "bmpc/svg.hpp"
