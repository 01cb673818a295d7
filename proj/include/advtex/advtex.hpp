#pragma once

#include "advtex/atlas.hpp"
#include "advtex/diff.hpp"
#include "advtex/discriminator.hpp"
#include "advtex/error.hpp"
#include "advtex/fourier_align.hpp"
#include "advtex/image.hpp"
#include "advtex/metrics.hpp"
#include "advtex/mrf.hpp"
#include "advtex/parallel.hpp"
#include "advtex/pipeline.hpp"
#include "advtex/raster.hpp"
#include "advtex/scene.hpp"
#include "advtex/synth.hpp"
#include "advtex/texinit.hpp"
#include "advtex/texsmooth.hpp"
