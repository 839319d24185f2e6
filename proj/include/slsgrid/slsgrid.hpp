#pragma once

#include "slsgrid/common.hpp"
#include "slsgrid/rng.hpp"
#include "slsgrid/topology.hpp"
#include "slsgrid/plant.hpp"
#include "slsgrid/optimization.hpp"
#include "slsgrid/system_response.hpp"
#include "slsgrid/column_solver.hpp"
#include "slsgrid/synthesis.hpp"
#include "slsgrid/sls_runtime.hpp"
#include "slsgrid/lqr.hpp"
#include "slsgrid/mpc.hpp"
#include "slsgrid/opf.hpp"
#include "slsgrid/layered.hpp"
#include "slsgrid/harness.hpp"
