#include <catch2/catch_amalgamated.hpp>
#include "dermboost/dermboost.hpp"
#include "test_support.hpp"
