#pragma once

// Umbrella header for the nimbus autoscaling simulator.

#include "nimbus/agent.hpp"
#include "nimbus/baselines.hpp"
#include "nimbus/forecaster.hpp"
#include "nimbus/graph.hpp"
#include "nimbus/harness.hpp"
#include "nimbus/loadgen.hpp"
#include "nimbus/metrics.hpp"
#include "nimbus/reward.hpp"
#include "nimbus/rng.hpp"
#include "nimbus/simcore.hpp"
#include "nimbus/store.hpp"
