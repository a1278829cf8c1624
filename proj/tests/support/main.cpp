#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "tpbnn/runtime.hpp"

int main(int argc, char** argv) {
  tpbnn::tune_allocator();
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
