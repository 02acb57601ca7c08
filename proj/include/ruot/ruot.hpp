#pragma once

#include "ruot/config.hpp"
#include "ruot/dataset.hpp"
#include "ruot/density.hpp"
#include "ruot/dynamics.hpp"
#include "ruot/error.hpp"
#include "ruot/evaluation.hpp"
#include "ruot/io.hpp"
#include "ruot/losses.hpp"
#include "ruot/mlp.hpp"
#include "ruot/nets.hpp"
#include "ruot/optim.hpp"
#include "ruot/penalty.hpp"
#include "ruot/rng.hpp"
#include "ruot/synthdata.hpp"
#include "ruot/training.hpp"
#include "ruot/transport.hpp"
