#pragma once

#include "hyperstab/activation.hpp"
#include "hyperstab/checkpoint.hpp"
#include "hyperstab/config.hpp"
#include "hyperstab/data.hpp"
#include "hyperstab/diagnostics.hpp"
#include "hyperstab/errors.hpp"
#include "hyperstab/experiment.hpp"
#include "hyperstab/fixtures.hpp"
#include "hyperstab/gradcheck.hpp"
#include "hyperstab/gradcheck_suite.hpp"
#include "hyperstab/hypernet.hpp"
#include "hyperstab/layers.hpp"
#include "hyperstab/losses.hpp"
#include "hyperstab/normalization.hpp"
#include "hyperstab/optim.hpp"
#include "hyperstab/rng.hpp"
#include "hyperstab/tensor.hpp"
