#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "holofocus/common.hpp"

int main(int argc, char** argv) {
    holo::set_thread_count(4);
    doctest::Context ctx;
    ctx.applyCommandLine(argc, argv);
    return ctx.run();
}
