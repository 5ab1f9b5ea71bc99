#pragma once

#include "shapesel/collision.hpp"
#include "shapesel/detect.hpp"
#include "shapesel/errors.hpp"
#include "shapesel/eval.hpp"
#include "shapesel/geom.hpp"
#include "shapesel/losses.hpp"
#include "shapesel/mesh.hpp"
#include "shapesel/occupancy.hpp"
#include "shapesel/optim.hpp"
#include "shapesel/sampling.hpp"
#include "shapesel/scene.hpp"
#include "shapesel/sdf.hpp"
#include "shapesel/shape_db.hpp"
#include "shapesel/toy_shapes.hpp"
