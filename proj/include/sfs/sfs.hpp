//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "sfs/config.hpp"
#include "sfs/csf.hpp"
#include "sfs/engine.hpp"
#include "sfs/error.hpp"
#include "sfs/io.hpp"
#include "sfs/perf.hpp"
#include "sfs/tensor.hpp"
#include "sfs/tiling.hpp"
