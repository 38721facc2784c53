#pragma once

#include "mdcsrn/tensor/activation.hpp"
#include "mdcsrn/tensor/conv3d.hpp"
#include "mdcsrn/tensor/error.hpp"
#include "mdcsrn/tensor/norm.hpp"
#include "mdcsrn/tensor/ops.hpp"
#include "mdcsrn/tensor/optim.hpp"
#include "mdcsrn/tensor/tensor.hpp"
