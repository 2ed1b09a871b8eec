#pragma once

#include <doctest.h>

#include "agealign/error.hpp"

// Runs `expr` and checks it throws agealign::Error of the given kind.
#define CHECK_ERROR_KIND(expr, expected_kind)                                          \
    do {                                                                             \
        bool thrown_ = false;                                                        \
        try {                                                                        \
            (void)(expr);                                                            \
        } catch (const agealign::Error& e_) {                                        \
            thrown_ = true;                                                          \
            CHECK_MESSAGE(e_.kind() == (expected_kind), "got kind ", agealign::to_string(e_.kind()), \
                          ": ", e_.what());                                          \
        }                                                                            \
        CHECK_MESSAGE(thrown_, "expected an error from " #expr);                     \
    } while (0)
