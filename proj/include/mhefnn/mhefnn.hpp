#pragma once

#include "mhefnn/errors.hpp"
#include "mhefnn/rng.hpp"
#include "mhefnn/numlin.hpp"
#include "mhefnn/relu_net.hpp"
#include "mhefnn/orthant_geo.hpp"
#include "mhefnn/pe_design.hpp"
#include "mhefnn/neighborhood.hpp"
#include "mhefnn/mhe_train.hpp"
#include "mhefnn/baselines.hpp"
#include "mhefnn/dataset.hpp"
#include "mhefnn/config.hpp"
#include "mhefnn/experiment.hpp"
