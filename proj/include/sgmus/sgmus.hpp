#pragma once

// Convenience include of the full library.

#include "sgmus/common.hpp"
#include "sgmus/convergence.hpp"
#include "sgmus/dataset.hpp"
#include "sgmus/diffusion_maps.hpp"
#include "sgmus/empirical_pdf.hpp"
#include "sgmus/manifest.hpp"
#include "sgmus/network.hpp"
#include "sgmus/parallel.hpp"
#include "sgmus/rng.hpp"
#include "sgmus/sample.hpp"
#include "sgmus/schedule.hpp"
#include "sgmus/simulate.hpp"
#include "sgmus/stats.hpp"
#include "sgmus/system.hpp"
#include "sgmus/train.hpp"
#include "sgmus/umbrella.hpp"
#include "sgmus/wham.hpp"
