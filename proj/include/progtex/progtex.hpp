#pragma once

#include "progtex/atlas.hpp"
#include "progtex/backend.hpp"
#include "progtex/camera.hpp"
#include "progtex/diffusion.hpp"
#include "progtex/error.hpp"
#include "progtex/export.hpp"
#include "progtex/geometry.hpp"
#include "progtex/image_io.hpp"
#include "progtex/pipeline.hpp"
#include "progtex/raster.hpp"
#include "progtex/rng.hpp"
#include "progtex/texstate.hpp"
