#pragma once

#include "cpol/conformal.hpp"
#include "cpol/dataset.hpp"
#include "cpol/density.hpp"
#include "cpol/eval.hpp"
#include "cpol/json_io.hpp"
#include "cpol/policy.hpp"
#include "cpol/reducer.hpp"
#include "cpol/rng.hpp"
#include "cpol/scenario.hpp"
#include "cpol/weights.hpp"
