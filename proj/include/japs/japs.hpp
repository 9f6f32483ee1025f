#pragma once

#include "japs/config.hpp"
#include "japs/conic.hpp"
#include "japs/errors.hpp"
#include "japs/experiment.hpp"
#include "japs/linalg.hpp"
#include "japs/metrics.hpp"
#include "japs/orchestrator.hpp"
#include "japs/rxopt.hpp"
#include "japs/scenario.hpp"
#include "japs/txbf.hpp"
