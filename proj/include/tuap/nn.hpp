#pragma once

#include "tuap/nn/classifier.hpp"
#include "tuap/nn/layers.hpp"
#include "tuap/nn/model_io.hpp"
#include "tuap/nn/presets.hpp"
#include "tuap/nn/train.hpp"
