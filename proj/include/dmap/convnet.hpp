#pragma once

#include <dmap/convnet/layers.hpp>
#include <dmap/convnet/network.hpp>
#include <dmap/convnet/serialize.hpp>
#include <dmap/convnet/tensor.hpp>
#include <dmap/convnet/train.hpp>
