#pragma once

#include "scl/ablation.hpp"
#include "scl/checkpoint.hpp"
#include "scl/data.hpp"
#include "scl/dataset_io.hpp"
#include "scl/errors.hpp"
#include "scl/eval.hpp"
#include "scl/losses.hpp"
#include "scl/model.hpp"
#include "scl/optim.hpp"
#include "scl/random.hpp"
#include "scl/run_config.hpp"
#include "scl/tensor.hpp"
