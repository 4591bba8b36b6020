#pragma once

#include "dronenet/config.hpp"
#include "dronenet/dqn.hpp"
#include "dronenet/energy.hpp"
#include "dronenet/error.hpp"
#include "dronenet/experiments.hpp"
#include "dronenet/io.hpp"
#include "dronenet/nn.hpp"
#include "dronenet/oracle.hpp"
#include "dronenet/rng.hpp"
#include "dronenet/version.hpp"
#include "dronenet/world.hpp"
#include "dronenet/world_json.hpp"
