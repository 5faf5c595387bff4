#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hvg/kvtext.hpp"
#include "hvg/optim.hpp"
#include "hvg/rng.hpp"

using namespace hvg;
namespace fs = std::filesystem;

TEST_CASE("param store preserves insertion order and rejects duplicates") {
    ParamStore ps;
    ps.add("b.w", Tensor({2, 2}));
    ps.add("a.w", Tensor({3}));
    CHECK(ps.names()[0] == "b.w");
    CHECK(ps.names()[1] == "a.w");
    CHECK(ps.total_elements() == 7);
    CHECK_THROWS(ps.add("b.w", Tensor({1})));
    CHECK_THROWS(ps.add("bad/name", Tensor({1})));
    CHECK_THROWS(ps.get("missing"));
    CHECK(ps.names_with_prefix("a.").size() == 1);
}

TEST_CASE("zero grad and zero decay leave params unchanged") {
    ParamStore ps;
    ps.add("p", Tensor({3}, {1, -2, 3}));
    AdamW opt({.lr = 0.1});
    opt.step(ps, {"p"}, {Tensor({3})});
    CHECK(ps.get("p")[0] == 1.0);
    CHECK(ps.get("p")[1] == -2.0);
    CHECK(ps.get("p")[2] == 3.0);
}

TEST_CASE("first step moves by lr for unit gradient") {
    // bias correction makes the step-1 update exactly lr * g/(|g|+eps')
    ParamStore ps;
    ps.add("p", Tensor({1}, {1.0}));
    AdamW opt({.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0});
    opt.step(ps, {"p"}, {Tensor({1}, {1.0})});
    CHECK(ps.get("p")[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("decoupled decay multiplies by 1 - lr*wd") {
    ParamStore ps;
    ps.add("p", Tensor({2}, {4.0, -8.0}));
    AdamW opt({.lr = 0.1, .weight_decay = 0.1});
    opt.step(ps, {"p"}, {Tensor({2})});
    CHECK(ps.get("p")[0] == doctest::Approx(4.0 * 0.99).epsilon(1e-12));
    CHECK(ps.get("p")[1] == doctest::Approx(-8.0 * 0.99).epsilon(1e-12));
}

TEST_CASE("non-finite gradient aborts and names the parameter") {
    ParamStore ps;
    ps.add("good", Tensor({1}, {1.0}));
    ps.add("bad.weight", Tensor({1}, {1.0}));
    AdamW opt({.lr = 0.1});
    Tensor nan_grad({1});
    nan_grad[0] = std::nan("");
    CHECK_THROWS_WITH_AS(opt.step(ps, {"good", "bad.weight"}, {Tensor({1}, {1.0}), nan_grad}),
                         doctest::Contains("bad.weight"), std::runtime_error);
    // aborted step must not have touched any parameter
    CHECK(ps.get("good")[0] == 1.0);
    CHECK(opt.step_count() == 0);
}

TEST_CASE("two adamw steps match a scalar hand evaluation") {
    ParamStore ps;
    ps.add("p", Tensor({1}, {0.5}));
    AdamWConfig cfg{.lr = 0.01, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0};
    AdamW opt(cfg);
    double g1 = 0.3, g2 = -0.2;
    opt.step(ps, {"p"}, {Tensor({1}, {g1})});
    opt.step(ps, {"p"}, {Tensor({1}, {g2})});

    double m = 0, v = 0, p = 0.5;
    double gs[2] = {g1, g2};
    for (int t = 1; t <= 2; ++t) {
        double g = gs[t - 1];
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        double mh = m / (1 - std::pow(cfg.beta1, t));
        double vh = v / (1 - std::pow(cfg.beta2, t));
        p -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
    CHECK(ps.get("p")[0] == doctest::Approx(p).epsilon(1e-15));
}

TEST_CASE("checkpoint round-trip preserves values order and config") {
    Rng r(31);
    ParamStore ps;
    ps.add("backbone.w0", r.normal_tensor({3, 4}));
    ps.add("backbone.b0", r.normal_tensor({4}));
    ps.add("control.zc0", Tensor({4, 4}));
    KvText cfg;
    cfg.set("d_model", "64");
    cfg.set_f64("lr", 1e-4);

    fs::path dir = fs::temp_directory_path() / "hvg_ckpt_test";
    fs::remove_all(dir);
    ps.save_checkpoint(dir.string(), cfg);

    ParamStore back;
    KvText cfg2 = back.load_checkpoint(dir.string());
    CHECK(cfg2.get("d_model") == "64");
    CHECK(cfg2.get_f64("lr") == 1e-4);
    REQUIRE(back.names() == ps.names());
    for (const auto& name : ps.names()) {
        const Tensor& a = ps.get(name);
        const Tensor& b = back.get(name);
        REQUIRE(a.same_shape(b));
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
    }
    CHECK(back.checksum() == ps.checksum());
    CHECK(back.checksum_with_prefix("backbone.") == ps.checksum_with_prefix("backbone."));
    CHECK(back.checksum_with_prefix("backbone.") != back.checksum());
}

TEST_CASE("corrupted checkpoint blob is detected") {
    ParamStore ps;
    ps.add("w", Tensor({2}, {1.0, 2.0}));
    fs::path dir = fs::temp_directory_path() / "hvg_ckpt_corrupt";
    fs::remove_all(dir);
    ps.save_checkpoint(dir.string(), KvText{});
    // flip one payload byte
    {
        std::fstream f(dir / "w.blob", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-1, std::ios::end);
        f.put('\x7f');
    }
    ParamStore back;
    CHECK_THROWS_WITH_AS(back.load_checkpoint(dir.string()), doctest::Contains("checksum"), std::runtime_error);
}
