#pragma once

// Random forests for continuous, categorical and competing-risk survival
// outcomes whose candidate predictors may include error-prone,
// irregularly measured longitudinal variables. At every tree node each
// longitudinal candidate is summarized by the subject-level random
// effects of a node-fitted linear mixed model, and those features are
// split on like ordinary time-fixed covariates.

#include "lmforest/archive.hpp"
#include "lmforest/csv.hpp"
#include "lmforest/data.hpp"
#include "lmforest/errors.hpp"
#include "lmforest/forest.hpp"
#include "lmforest/importance.hpp"
#include "lmforest/lmm.hpp"
#include "lmforest/rng.hpp"
#include "lmforest/simulate.hpp"
#include "lmforest/survival.hpp"
#include "lmforest/tree.hpp"
