#pragma once

#include "dne/data.hpp"
#include "dne/error.hpp"
#include "dne/evolution.hpp"
#include "dne/model.hpp"
#include "dne/persistence.hpp"
#include "dne/rng.hpp"
#include "dne/tensor.hpp"
#include "dne/thread_pool.hpp"
