#pragma once

#include "sparse_reptile/bounds.hpp"
#include "sparse_reptile/error.hpp"
#include "sparse_reptile/loss.hpp"
#include "sparse_reptile/mask.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/ops.hpp"
#include "sparse_reptile/pgm.hpp"
#include "sparse_reptile/pruning.hpp"
#include "sparse_reptile/reptile.hpp"
#include "sparse_reptile/rng.hpp"
#include "sparse_reptile/tasks.hpp"
#include "sparse_reptile/tensor.hpp"

#include "sparse_reptile/harness/checkpoint.hpp"
#include "sparse_reptile/harness/config.hpp"
#include "sparse_reptile/harness/evaluate.hpp"
#include "sparse_reptile/harness/experiment.hpp"
#include "sparse_reptile/harness/metrics.hpp"
