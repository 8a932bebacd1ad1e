#pragma once

#include "relucert/certify.hpp"
#include "relucert/errors.hpp"
#include "relucert/fastlin.hpp"
#include "relucert/fastlip.hpp"
#include "relucert/linalg.hpp"
#include "relucert/model.hpp"
#include "relucert/oracle.hpp"
#include "relucert/report.hpp"
#include "relucert/rng.hpp"
