#pragma once

#include "config.hpp"
#include "errors.hpp"
#include "evolution.hpp"
#include "fem_solver.hpp"
#include "hungarian.hpp"
#include "mesh_quality.hpp"
#include "region_model.hpp"
#include "seeds.hpp"
#include "sparse.hpp"
#include "topo_engine.hpp"
#include "trimesh.hpp"
#include "vec3.hpp"
#include "voxel_image.hpp"
