#pragma once

#include "sparselab/core.hpp"
#include "sparselab/numkit.hpp"
#include "sparselab/model.hpp"
#include "sparselab/simulate.hpp"
#include "sparselab/stats.hpp"
#include "sparselab/estimators.hpp"
#include "sparselab/tuning.hpp"
#include "sparselab/experiments.hpp"
#include "sparselab/io.hpp"
