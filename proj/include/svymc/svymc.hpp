#pragma once

#include "svymc/errors.hpp"
#include "svymc/matrix.hpp"
#include "svymc/exp_family.hpp"
#include "svymc/dataset.hpp"
#include "svymc/missing_mechanism.hpp"
#include "svymc/solver.hpp"
#include "svymc/metrics.hpp"
#include "svymc/tuning.hpp"
#include "svymc/simulator.hpp"
#include "svymc/baselines.hpp"
#include "svymc/benchmark.hpp"
#include "svymc/io.hpp"
