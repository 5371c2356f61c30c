#pragma once

#include "vfba/core.hpp"
#include "vfba/warp.hpp"
#include "vfba/flow.hpp"
#include "vfba/register.hpp"
#include "vfba/fft.hpp"
#include "vfba/fba.hpp"
#include "vfba/pipeline.hpp"
#include "vfba/bench.hpp"
#include "vfba/io.hpp"
