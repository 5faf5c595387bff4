#include <filesystem>

#include "doctest.h"
#include "hvg/kvtext.hpp"

using namespace hvg;

TEST_CASE("set/get round-trip with order preserved") {
    KvText kv;
    kv.set("zeta", "1");
    kv.set("alpha", "two");
    kv.set_i64("count", 42);
    kv.set_f64("pi", 3.141592653589793);
    CHECK(kv.get("zeta") == "1");
    CHECK(kv.get_i64("count") == 42);
    CHECK(kv.get_f64("pi") == 3.141592653589793);
    CHECK(kv.entries()[0].first == "zeta");
    CHECK(kv.entries()[1].first == "alpha");

    KvText back = KvText::parse(kv.to_string());
    CHECK(back.to_string() == kv.to_string());
    CHECK(back.get_f64("pi") == 3.141592653589793);
}

TEST_CASE("f64 values survive text round-trip bit-exactly") {
    KvText kv;
    double vals[] = {0.1, 1e-300, -2.5e17, 1.0 / 3.0, 5e-324};
    for (int i = 0; i < 5; ++i) kv.set_f64("v" + std::to_string(i), vals[i]);
    KvText back = KvText::parse(kv.to_string());
    for (int i = 0; i < 5; ++i) CHECK(back.get_f64("v" + std::to_string(i)) == vals[i]);
}

TEST_CASE("comments and blank lines are tolerated") {
    KvText kv = KvText::parse("# header\n\na = 1\n  b =  spaced value \n# tail\n");
    CHECK(kv.get("a") == "1");
    CHECK(kv.get("b") == "spaced value");
}

TEST_CASE("missing keys and bad lines raise errors") {
    KvText kv = KvText::parse("a = 1\n");
    CHECK_THROWS(kv.get("b"));
    CHECK(kv.get_or("b", "d") == "d");
    CHECK(kv.get_i64_or("b", 7) == 7);
    CHECK(kv.get_f64_or("b", 2.5) == 2.5);
    CHECK_THROWS(KvText::parse("not a pair\n"));
    KvText text_val = KvText::parse("s = hello\n");
    CHECK_THROWS(text_val.get_i64("s"));
    CHECK_THROWS(text_val.get_f64("s"));
}

TEST_CASE("set overwrites in place") {
    KvText kv;
    kv.set("k", "1");
    kv.set("other", "x");
    kv.set("k", "2");
    CHECK(kv.get("k") == "2");
    CHECK(kv.entries().size() == 2);
    CHECK(kv.entries()[0].first == "k");
}

TEST_CASE("save/load through a file") {
    auto p = std::filesystem::temp_directory_path() / "hvg_kv_test.txt";
    KvText kv;
    kv.set("name", "desk");
    kv.set_f64("lr", 3e-3);
    kv.save(p);
    KvText back = KvText::load(p);
    CHECK(back.get("name") == "desk");
    CHECK(back.get_f64("lr") == 3e-3);
}
