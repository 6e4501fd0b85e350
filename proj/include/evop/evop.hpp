#pragma once

#include "evop/common.hpp"
#include "evop/trajectory.hpp"
#include "evop/systems.hpp"
#include "evop/io.hpp"
#include "evop/encoder.hpp"
#include "evop/objective.hpp"
#include "evop/estimator.hpp"
#include "evop/eigensolver.hpp"
#include "evop/spectral.hpp"
#include "evop/interpret.hpp"
#include "evop/training.hpp"
#include "evop/checkpoint.hpp"
#include "evop/config.hpp"
