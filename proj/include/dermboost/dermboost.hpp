#pragma once

// Umbrella header for the dermboost melanoma risk-scoring toolkit.

#include "dermboost/config.hpp"
#include "dermboost/csv.hpp"
#include "dermboost/dataset.hpp"
#include "dermboost/errors.hpp"
#include "dermboost/features.hpp"
#include "dermboost/fusion.hpp"
#include "dermboost/gbdt.hpp"
#include "dermboost/imbalance.hpp"
#include "dermboost/metrics.hpp"
#include "dermboost/pipeline.hpp"
#include "dermboost/rng.hpp"
#include "dermboost/search.hpp"
#include "dermboost/validation.hpp"
