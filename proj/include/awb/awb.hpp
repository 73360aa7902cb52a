#pragma once

// Umbrella header for the adversarial workbench.

#include "awb/attack.hpp"
#include "awb/checkpoint.hpp"
#include "awb/cli.hpp"
#include "awb/data.hpp"
#include "awb/error.hpp"
#include "awb/gan.hpp"
#include "awb/image_io.hpp"
#include "awb/metrics.hpp"
#include "awb/nn.hpp"
#include "awb/parallel.hpp"
#include "awb/reports.hpp"
#include "awb/rng.hpp"
#include "awb/synth.hpp"
#include "awb/tensor.hpp"
#include "awb/train.hpp"
#include "awb/video.hpp"
