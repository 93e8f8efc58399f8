#pragma once

#include "regpoison/attack.hpp"
#include "regpoison/baselines.hpp"
#include "regpoison/data_io.hpp"
#include "regpoison/errors.hpp"
#include "regpoison/fit.hpp"
#include "regpoison/gradients.hpp"
#include "regpoison/harness.hpp"
#include "regpoison/model.hpp"
#include "regpoison/rng.hpp"
#include "regpoison/statp.hpp"
#include "regpoison/trim.hpp"
#include "regpoison/types.hpp"
