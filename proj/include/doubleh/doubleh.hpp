// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "doubleh/errors.hpp"
#include "doubleh/random.hpp"
#include "doubleh/tensor.hpp"
#include "doubleh/graph.hpp"
#include "doubleh/labeling.hpp"
#include "doubleh/model.hpp"
#include "doubleh/data_io.hpp"
#include "doubleh/training.hpp"
