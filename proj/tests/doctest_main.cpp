#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "iid/runtime.hpp"

int main(int argc, char** argv) {
    iid::tune_numeric_runtime(argv);
    return doctest::Context(argc, argv).run();
}
