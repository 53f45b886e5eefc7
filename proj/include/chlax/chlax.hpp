#pragma once

#include "chlax/ch_solver.hpp"
#include "chlax/errors.hpp"
#include "chlax/factorization.hpp"
#include "chlax/fredholm.hpp"
#include "chlax/grid.hpp"
#include "chlax/io.hpp"
#include "chlax/operator_algebra.hpp"
#include "chlax/oracles.hpp"
#include "chlax/pipeline.hpp"
