#pragma once

#include "unmix/classical.hpp"
#include "unmix/grad_check.hpp"
#include "unmix/io.hpp"
#include "unmix/mixing.hpp"
#include "unmix/network.hpp"
#include "unmix/nn_ops.hpp"
#include "unmix/profiles.hpp"
#include "unmix/rng.hpp"
#include "unmix/tensor.hpp"
#include "unmix/training.hpp"
#include "unmix/version.hpp"
