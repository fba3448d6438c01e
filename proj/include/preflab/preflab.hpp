#pragma once

// Umbrella header: tabular online/offline preference-optimization laboratory.

#include "preflab/config.hpp"
#include "preflab/csv.hpp"
#include "preflab/dataset.hpp"
#include "preflab/errors.hpp"
#include "preflab/evaluate.hpp"
#include "preflab/experiment.hpp"
#include "preflab/losses.hpp"
#include "preflab/mathutil.hpp"
#include "preflab/matrix.hpp"
#include "preflab/oracle.hpp"
#include "preflab/policy.hpp"
#include "preflab/preference.hpp"
#include "preflab/presets.hpp"
#include "preflab/proxy_training.hpp"
#include "preflab/rng.hpp"
#include "preflab/serialize.hpp"
#include "preflab/train.hpp"
#include "preflab/world.hpp"
