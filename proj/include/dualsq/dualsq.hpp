#pragma once

#include "dualsq/core.hpp"
#include "dualsq/functions.hpp"
#include "dualsq/problem.hpp"
#include "dualsq/graph.hpp"
#include "dualsq/gossip.hpp"
#include "dualsq/trace.hpp"
#include "dualsq/saddle.hpp"
#include "dualsq/outer.hpp"
#include "dualsq/sim.hpp"
#include "dualsq/experiments.hpp"
#include "dualsq/io.hpp"
