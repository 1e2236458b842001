#pragma once

#include "tagi/bench.hpp"
#include "tagi/checkpoint.hpp"
#include "tagi/config.hpp"
#include "tagi/data.hpp"
#include "tagi/error.hpp"
#include "tagi/gan.hpp"
#include "tagi/gaussian.hpp"
#include "tagi/image_io.hpp"
#include "tagi/inference.hpp"
#include "tagi/layer_spec.hpp"
#include "tagi/layers.hpp"
#include "tagi/metrics.hpp"
#include "tagi/network.hpp"
#include "tagi/params.hpp"
#include "tagi/train.hpp"
