#pragma once

#include "augment.hpp"
#include "checkpoint.hpp"
#include "cluster.hpp"
#include "config.hpp"
#include "data.hpp"
#include "engine.hpp"
#include "error.hpp"
#include "fixmatch.hpp"
#include "matrix.hpp"
#include "metrics.hpp"
#include "nn.hpp"
#include "proto.hpp"
