#pragma once

#include "constants.hpp"
#include "decay.hpp"
#include "fockspace.hpp"
#include "fourport.hpp"
#include "layered1d.hpp"
#include "linalg.hpp"
#include "permittivity.hpp"
