#pragma once

#include "homwarp/cascade.hpp"
#include "homwarp/checkpoint.hpp"
#include "homwarp/data.hpp"
#include "homwarp/error.hpp"
#include "homwarp/evaluate.hpp"
#include "homwarp/geometry.hpp"
#include "homwarp/image.hpp"
#include "homwarp/image_io.hpp"
#include "homwarp/model.hpp"
#include "homwarp/report.hpp"
#include "homwarp/timing.hpp"
#include "homwarp/train.hpp"
#include "homwarp/warp.hpp"
