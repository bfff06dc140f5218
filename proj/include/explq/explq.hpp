#pragma once

#include "closed_form.hpp"
#include "config.hpp"
#include "constants.hpp"
#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "moments.hpp"
#include "parallel.hpp"
#include "policy_eval.hpp"
#include "rng.hpp"
#include "run.hpp"
#include "sde.hpp"
