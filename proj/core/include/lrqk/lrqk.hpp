#pragma once

#include "lrqk/cache.hpp"
#include "lrqk/decode.hpp"
#include "lrqk/error.hpp"
#include "lrqk/matkernels.hpp"
#include "lrqk/matrix.hpp"
#include "lrqk/oracle.hpp"
#include "lrqk/prefill.hpp"
#include "lrqk/session.hpp"
#include "lrqk/trace.hpp"
#include "lrqk/workload.hpp"
