#pragma once

#include "vibes/analysis.hpp"
#include "vibes/classifiers.hpp"
#include "vibes/core_model.hpp"
#include "vibes/error.hpp"
#include "vibes/io.hpp"
#include "vibes/lbfgs.hpp"
#include "vibes/report.hpp"
#include "vibes/rng.hpp"
#include "vibes/sampling.hpp"
#include "vibes/search.hpp"
