#pragma once

#include "ghostlayer/error.hpp"
#include "ghostlayer/imaging.hpp"
#include "ghostlayer/kernels.hpp"
#include "ghostlayer/losses.hpp"
#include "ghostlayer/network.hpp"
#include "ghostlayer/network_spec.hpp"
#include "ghostlayer/optimizer.hpp"
#include "ghostlayer/pipeline.hpp"
#include "ghostlayer/png_codec.hpp"
#include "ghostlayer/random.hpp"
#include "ghostlayer/tensor.hpp"
#include "ghostlayer/weights.hpp"
