#pragma once

#include "labelsweep/conflearn.hpp"
#include "labelsweep/consensus.hpp"
#include "labelsweep/error.hpp"
#include "labelsweep/folds.hpp"
#include "labelsweep/manifest.hpp"
#include "labelsweep/mergecat.hpp"
#include "labelsweep/pipeline.hpp"
#include "labelsweep/plan.hpp"
#include "labelsweep/predstore.hpp"
#include "labelsweep/simharness.hpp"
#include "labelsweep/xai.hpp"
