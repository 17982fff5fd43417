#pragma once

#include "marvin/baselines.hpp"
#include "marvin/commands.hpp"
#include "marvin/common.hpp"
#include "marvin/dataset.hpp"
#include "marvin/distributions.hpp"
#include "marvin/export.hpp"
#include "marvin/features.hpp"
#include "marvin/graph.hpp"
#include "marvin/graph_io.hpp"
#include "marvin/inbox.hpp"
#include "marvin/model.hpp"
#include "marvin/nn/grad_check.hpp"
#include "marvin/nn/params.hpp"
#include "marvin/nn/tape.hpp"
#include "marvin/policy.hpp"
#include "marvin/sim.hpp"
#include "marvin/training.hpp"
#include "marvin/tsp.hpp"
