#pragma once

#include "pabee/bench.hpp"
#include "pabee/checkpoint.hpp"
#include "pabee/config.hpp"
#include "pabee/dataset.hpp"
#include "pabee/errors.hpp"
#include "pabee/inference.hpp"
#include "pabee/model.hpp"
#include "pabee/numerics.hpp"
#include "pabee/parallel.hpp"
#include "pabee/policy.hpp"
#include "pabee/rng.hpp"
#include "pabee/theory.hpp"
