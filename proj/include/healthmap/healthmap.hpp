#pragma once

#include "healthmap/affinity.hpp"
#include "healthmap/compiler.hpp"
#include "healthmap/crc32.hpp"
#include "healthmap/error.hpp"
#include "healthmap/fault_manager.hpp"
#include "healthmap/footprint.hpp"
#include "healthmap/health_map.hpp"
#include "healthmap/hierarchy.hpp"
#include "healthmap/resource_map.hpp"
#include "healthmap/shm_codec.hpp"
#include "healthmap/symbols.hpp"
#include "healthmap/types.hpp"
