#pragma once

// Umbrella header.

#include "dpbn/baseline.hpp"
#include "dpbn/config.hpp"
#include "dpbn/data.hpp"
#include "dpbn/error.hpp"
#include "dpbn/gradcheck.hpp"
#include "dpbn/maxent.hpp"
#include "dpbn/model_io.hpp"
#include "dpbn/network.hpp"
#include "dpbn/parallel.hpp"
#include "dpbn/pipeline.hpp"
#include "dpbn/saddle.hpp"
#include "dpbn/tca.hpp"
#include "dpbn/trainer.hpp"
#include "dpbn/training.hpp"
#include "dpbn/types.hpp"
