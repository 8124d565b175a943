#pragma once

#include "excision/bayesopt.hpp"
#include "excision/config.hpp"
#include "excision/error.hpp"
#include "excision/experiment.hpp"
#include "excision/features.hpp"
#include "excision/hmm.hpp"
#include "excision/io.hpp"
#include "excision/maxwell.hpp"
#include "excision/random.hpp"
#include "excision/scoring.hpp"
#include "excision/signal.hpp"
#include "excision/trajectory.hpp"
