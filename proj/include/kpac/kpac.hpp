#pragma once

#include "kpac/autodiff.hpp"
#include "kpac/deconv.hpp"
#include "kpac/error.hpp"
#include "kpac/experiments.hpp"
#include "kpac/image.hpp"
#include "kpac/netpbm.hpp"
#include "kpac/network.hpp"
#include "kpac/optim.hpp"
#include "kpac/spectral.hpp"
#include "kpac/tensor.hpp"
#include "kpac/train.hpp"
#include "kpac/weights_io.hpp"
