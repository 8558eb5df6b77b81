#pragma once

#include "lipcert/analysis.hpp"
#include "lipcert/errors.hpp"
#include "lipcert/lmi.hpp"
#include "lipcert/model.hpp"
#include "lipcert/numerics.hpp"
#include "lipcert/report.hpp"
#include "lipcert/sdp.hpp"
