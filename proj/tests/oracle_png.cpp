#include "oracle_png.hpp"
