#pragma once

#include "condest/error.hpp"
#include "condest/rng.hpp"
#include "condest/sparse/csr.hpp"
#include "condest/sparse/dense.hpp"
#include "condest/sparse/matrix_market.hpp"
#include "condest/gen/generators.hpp"
#include "condest/gen/dataset.hpp"
#include "condest/features/features.hpp"
#include "condest/nn/tensor.hpp"
#include "condest/nn/params.hpp"
#include "condest/nn/autodiff.hpp"
#include "condest/nn/optim.hpp"
#include "condest/model/gnn.hpp"
#include "condest/model/train.hpp"
#include "condest/model/io.hpp"
#include "condest/estimators/estimators.hpp"
#include "condest/bench/metrics.hpp"
#include "condest/bench/config.hpp"
#include "condest/bench/benchmark.hpp"
