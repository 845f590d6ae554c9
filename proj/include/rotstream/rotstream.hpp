// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "rotstream/angle_loss.hpp"
#include "rotstream/det_loss.hpp"
#include "rotstream/dfp.hpp"
#include "rotstream/error.hpp"
#include "rotstream/geometry.hpp"
#include "rotstream/head_codec.hpp"
#include "rotstream/io_formats.hpp"
#include "rotstream/stream_eval.hpp"
