#pragma once

#include "lite/error.hpp"
#include "lite/tensor.hpp"
#include "lite/scorers.hpp"
#include "lite/nn.hpp"
#include "lite/head.hpp"
#include "lite/losses.hpp"
#include "lite/metrics.hpp"
#include "lite/index.hpp"
#include "lite/train.hpp"
#include "lite/rerank.hpp"
#include "lite/theory.hpp"
