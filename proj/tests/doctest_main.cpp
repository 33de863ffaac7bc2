#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "dnlab/linalg.hpp"

int main(int argc, char** argv) {
  dnlab::pin_blas_environment(argv);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
