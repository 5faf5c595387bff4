#include <limits>

#include "doctest.h"
#include "hvg/tensor.hpp"

using namespace hvg;

TEST_CASE("tensor construction and shape") {
    Tensor t({2, 3});
    CHECK(t.ndim() == 2);
    CHECK(t.dim(0) == 2);
    CHECK(t.dim(1) == 3);
    CHECK(t.numel() == 6);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);

    Tensor s = Tensor::from_scalar(2.5);
    CHECK(s.numel() == 1);
    CHECK(s[0] == 2.5);

    Tensor f = Tensor::full({2, 2}, 7.0);
    CHECK(f[3] == 7.0);
}

TEST_CASE("tensor data constructor validates length") {
    CHECK_NOTHROW(Tensor({2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS(Tensor({2, 2}, {1, 2, 3}));
}

TEST_CASE("row-major indexing") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.at({0, 0}) == 1);
    CHECK(t.at({0, 2}) == 3);
    CHECK(t.at({1, 0}) == 4);
    CHECK(t.at({1, 2}) == 6);
    CHECK_THROWS(t.at({2, 0}));
    CHECK_THROWS(t.at({0, 3}));
    CHECK_THROWS(t.at({0}));
}

TEST_CASE("finiteness and max_abs") {
    Tensor t({3}, {1.0, -4.0, 2.0});
    CHECK(t.all_finite());
    CHECK(t.max_abs() == 4.0);
    t[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("shape helpers") {
    CHECK(shape_numel({2, 3, 4}) == 24);
    CHECK(shape_numel({}) == 1);
    CHECK_THROWS(shape_numel({2, -1}));
    CHECK(shape_str({2, 3}) == "[2,3]");
    Tensor a({2, 2});
    Tensor b({2, 2});
    Tensor c({4});
    CHECK(a.same_shape(b));
    CHECK_FALSE(a.same_shape(c));
}
