#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "thg/autodiff.hpp"
#include "thg/errors.hpp"
#include "thg/layers.hpp"
#include "thg/rng.hpp"
#include "thg/tensor.hpp"

using namespace thg;
using namespace thg::nn;
using ad::Tape;
using ad::Var;

namespace {

Tensor make(const std::vector<std::size_t>& shape,
            const std::vector<double>& vals) {
  Tensor t(shape);
  REQUIRE(t.size() == vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) t[i] = vals[i];
  return t;
}

Tensor randn(Rng& rng, const std::vector<std::size_t>& shape, double s = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = s * rng.normal();
  return t;
}

double fro(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("init_orthogonal produces orthonormal rows/columns") {
  Rng rng(31);
  // square: w w^T = I
  Tensor w = init_orthogonal(4, 4, rng);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 4; ++k) d += w.at(i, k) * w.at(j, k);
      CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
    }

  // wide: rows orthonormal
  Tensor ww = init_orthogonal(3, 8, rng);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 8; ++k) d += ww.at(i, k) * ww.at(j, k);
      CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
    }

  // tall: columns orthonormal
  Tensor wt = init_orthogonal(8, 3, rng);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < 8; ++k) d += wt.at(k, i) * wt.at(k, j);
      CHECK(d == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
    }

  // 1x1 degenerates to a sign
  Tensor w1 = init_orthogonal(1, 1, rng);
  CHECK(std::abs(w1[0]) == doctest::Approx(1.0).epsilon(1e-12));

  // orthogonal maps preserve norms: |x W^T| = |x|
  Tensor x = randn(rng, {1, 4});
  Tensor y(std::vector<std::size_t>{1, 4});
  for (std::size_t o = 0; o < 4; ++o) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += x[k] * w.at(o, k);
    y[o] = s;
  }
  CHECK(fro(y) == doctest::Approx(fro(x)).epsilon(1e-12));
}

TEST_CASE("init_kaiming has the right spread and is deterministic") {
  Rng a(32), b(32);
  Tensor w1 = init_kaiming(1000, 1000, a);
  Tensor w2 = init_kaiming(1000, 1000, b);
  CHECK(bit_equal(w1, w2));

  double mean = 0.0;
  for (std::size_t i = 0; i < w1.size(); ++i) mean += w1[i];
  mean /= static_cast<double>(w1.size());
  double var = 0.0;
  for (std::size_t i = 0; i < w1.size(); ++i) {
    const double d = w1[i] - mean;
    var += d * d;
  }
  const double std_hat = std::sqrt(var / static_cast<double>(w1.size()));
  const double target = std::sqrt(2.0 / 1000.0);
  CHECK(std_hat > 0.9 * target);
  CHECK(std_hat < 1.1 * target);
  CHECK(std::abs(mean) < 3.0 * target / 1000.0);  // 3 sigma of the mean
}

TEST_CASE("hyperbolic linear: frozen closed-form values") {
  Rng rng(33);
  geometry::Curvature c1(1.0);
  HyperbolicLinear hl("hl", 2, 2, c1, rng);
  hl.w.value = make({2, 2}, {1, 0, 0, 1});

  // b = 0: the layer collapses to y = x w^T = x
  {
    hl.b.value.fill(0.0);
    Tape t;
    Var y = hl.forward(t, t.constant(make({1, 2}, {0.3, -0.4})));
    CHECK(y.value()[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(y.value()[1] == doctest::Approx(-0.4).epsilon(1e-12));
  }

  // x = 0, b = (0.8, 0): y = log0(b) = (arctanh 0.8, 0)
  {
    hl.b.value = make({2}, {0.8, 0.0});
    Tape t;
    Var y = hl.forward(t, t.constant(make({1, 2}, {0.0, 0.0})));
    CHECK(y.value()[0] ==
          doctest::Approx(1.0986122886681096914).epsilon(1e-13));
    CHECK(std::abs(y.value()[1]) < 1e-15);
  }

  // x = (0.5, 0), w = I, b = (0.5, 0): collinear, so arctanh adds:
  // y = (0.5 + arctanh(0.5), 0) = (1.0493061443340548457, 0)
  {
    hl.b.value = make({2}, {0.5, 0.0});
    Tape t;
    Var y = hl.forward(t, t.constant(make({1, 2}, {0.5, 0.0})));
    CHECK(y.value()[0] ==
          doctest::Approx(1.0493061443340548457).epsilon(1e-13));
    CHECK(std::abs(y.value()[1]) < 1e-15);
    // the Euclidean layer would give exactly 1.0 here; the gap is the
    // curvature speaking, and it is far above test noise
    CHECK(std::abs(y.value()[0] - 1.0) > 1e-3);
  }
}

TEST_CASE("hyperbolic linear: bias toward the shell grows the output norm") {
  Rng rng(34);
  for (double cv : {1.0, 2.0}) {
    geometry::Curvature c(cv);
    HyperbolicLinear hl("hl", 2, 2, c, rng);
    hl.w.value = make({2, 2}, {1, 0, 0, 1});
    double prev = -1.0;
    for (double t : {0.0, 0.5, 0.9, 0.99}) {
      const double bn = t / c.sqrt_c();
      CHECK(bn < 1.0 / c.sqrt_c());  // strict ball membership
      hl.b.value = make({2}, {bn, 0.0});
      Tape tape;
      Var y = hl.forward(tape, tape.constant(make({1, 2}, {0.0, 0.0})));
      const double n = fro(y.value());
      CHECK(n > prev);  // atanh(t)/sqrt(c), strictly monotone in t
      prev = n;
    }
    // closed form of the largest one: atanh(0.99)/sqrt(c)
    CHECK(prev == doctest::Approx(std::atanh(0.99) / c.sqrt_c()).epsilon(1e-12));
  }
}

TEST_CASE("attention with a single position is out_proj(v_proj(x))") {
  Rng rng(35);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  ThgEncoder enc("enc", cfg, rng);
  Tensor x = randn(rng, {1, 8}, 0.5);
  for (CompatMode mode :
       {CompatMode::DotProduct, CompatMode::HyperbolicDistance}) {
    enc.cfg.compat = mode;  // the softmax over one key is 1 in either mode
    Tape t;
    Var att = thg_attention(t, enc, t.constant(x));
    Var direct = enc.out_proj.forward(t, enc.v_proj.forward(t, t.constant(x)));
    REQUIRE(att.value().same_shape(direct.value()));
    for (std::size_t i = 0; i < att.value().size(); ++i)
      CHECK(att.value()[i] ==
            doctest::Approx(direct.value()[i]).epsilon(1e-14));
  }
}

TEST_CASE("attention over identical rows equals the single-row answer") {
  Rng rng(36);
  for (CompatMode mode :
       {CompatMode::DotProduct, CompatMode::HyperbolicDistance}) {
    EncoderConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.compat = mode;
    ThgEncoder enc("enc", cfg, rng);
    Tensor row = randn(rng, {1, 8}, 0.5);
    Tensor rep(std::vector<std::size_t>{4, 8});
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 8; ++j) rep.at(r, j) = row[j];
    Tape t;
    Var one = thg_attention(t, enc, t.constant(row));
    Var four = thg_attention(t, enc, t.constant(rep));
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(four.value().at(r, j) ==
              doctest::Approx(one.value().at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("dot-product attention with zero hyperbolic biases matches a "
          "hand-rolled euclidean oracle") {
  Rng rng(37);
  EncoderConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  ThgEncoder enc("enc", cfg, rng);
  enc.q_h->b.value.fill(0.0);
  enc.k_h->b.value.fill(0.0);

  const std::size_t seq = 3, d = 8, nh = 2, dk = d / nh;
  Tensor x = randn(rng, {seq, d}, 0.5);

  Tape t;
  Var att = thg_attention(t, enc, t.constant(x));

  // oracle: plain loops over the tensor values
  auto linear = [&](const Tensor& in, const Parameter& w, const Parameter& b) {
    Tensor out(std::vector<std::size_t>{in.shape()[0], w.value.shape()[0]});
    for (std::size_t r = 0; r < in.shape()[0]; ++r)
      for (std::size_t o = 0; o < w.value.shape()[0]; ++o) {
        double s = b.value.size() ? b.value[o] : 0.0;
        for (std::size_t k = 0; k < w.value.shape()[1]; ++k)
          s += in.at(r, k) * w.value.at(o, k);
        out.at(r, o) = s;
      }
    return out;
  };
  Parameter nob("nob", Tensor({d}));
  Tensor q = linear(x, enc.q_h->w, nob), k = linear(x, enc.k_h->w, nob);
  Tensor v = linear(x, enc.v_proj.w, enc.v_proj.b);
  Tensor cat(std::vector<std::size_t>{seq, d});
  for (std::size_t h = 0; h < nh; ++h) {
    for (std::size_t i = 0; i < seq; ++i) {
      // scores + softmax for row i of head h
      std::vector<double> sc(seq);
      double mx = -1e300;
      for (std::size_t j = 0; j < seq; ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < dk; ++e)
          s += q.at(i, h * dk + e) * k.at(j, h * dk + e);
        sc[j] = s / std::sqrt(static_cast<double>(dk));
        mx = std::max(mx, sc[j]);
      }
      double z = 0.0;
      for (double& s : sc) {
        s = std::exp(s - mx);
        z += s;
      }
      for (std::size_t e = 0; e < dk; ++e) {
        double acc = 0.0;
        for (std::size_t j = 0; j < seq; ++j)
          acc += sc[j] / z * v.at(j, h * dk + e);
        cat.at(i, h * dk + e) = acc;
      }
    }
  }
  Tensor oracle = linear(cat, enc.out_proj.w, enc.out_proj.b);
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(att.value()[i] == doctest::Approx(oracle[i]).epsilon(1e-9));
}

TEST_CASE("hyperbolic-distance scores peak at coinciding points") {
  Rng rng(38);
  geometry::Curvature c(1.0);
  Tape t;
  Tensor q = randn(rng, {3, 4}, 0.3);
  Tensor k = q;  // k_j == q_j
  Var s = t.neg_pairwise_hyperbolic_distance(t.constant(q), t.constant(k), c);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(s.value().at(i, i)) < 1e-9);  // -d(x,x) = 0
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(s.value().at(i, j) <= 1e-9);  // scores are minus a distance
      if (i != j) CHECK(s.value().at(i, j) < s.value().at(i, i));
    }
  }
}

TEST_CASE("padding mask removes keys: equals attention over the prefix") {
  Rng rng(39);
  for (CompatMode mode :
       {CompatMode::DotProduct, CompatMode::HyperbolicDistance}) {
    EncoderConfig cfg;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.compat = mode;
    ThgEncoder enc("enc", cfg, rng);
    Tensor x = randn(rng, {4, 8}, 0.5);
    Tensor xp(std::vector<std::size_t>{2, 8});
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 8; ++j) xp.at(r, j) = x.at(r, j);

    std::vector<std::uint8_t> mask{0, 0, 1, 1};
    Tape t;
    Var full = thg_attention(t, enc, t.constant(x), &mask);
    Var pre = thg_attention(t, enc, t.constant(xp));
    // un-padded query rows must ignore padded keys entirely
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(full.value().at(r, j) ==
              doctest::Approx(pre.value().at(r, j)).epsilon(1e-12));
  }
}

TEST_CASE("full encoder block with zero q/k biases matches the euclidean "
          "baseline") {
  EncoderConfig ct;
  ct.d_model = 8;
  ct.n_heads = 2;
  ct.kind = ModelKind::Thg;
  EncoderConfig ce = ct;
  ce.kind = ModelKind::Euclidean;

  Rng r1(40), r2(41);
  ThgEncoder enc_t("t", ct, r1), enc_e("e", ce, r2);

  std::vector<Parameter*> pt, pe;
  enc_t.collect(pt);
  enc_e.collect(pe);
  REQUIRE(pt.size() == pe.size());
  for (std::size_t i = 0; i < pt.size(); ++i) {
    REQUIRE(pt[i]->value.same_shape(pe[i]->value));
    pe[i]->value = pt[i]->value;  // identical weights everywhere
  }
  enc_t.q_h->b.value.fill(0.0);  // the only spot the geometries differ
  enc_t.k_h->b.value.fill(0.0);
  enc_e.q_e->b.value.fill(0.0);
  enc_e.k_e->b.value.fill(0.0);

  Rng rx(42);
  Tensor x = randn(rx, {4, 8}, 0.5);
  Tape t;
  Var yt = encoder_forward(t, enc_t, t.constant(x));
  Var ye = encoder_forward(t, enc_e, t.constant(x));
  for (std::size_t i = 0; i < yt.value().size(); ++i)
    CHECK(yt.value()[i] == doctest::Approx(ye.value()[i]).epsilon(1e-9));
}

TEST_CASE("nonzero ball bias separates thg from the euclidean baseline") {
  EncoderConfig ct;
  ct.d_model = 8;
  ct.n_heads = 2;
  EncoderConfig ce = ct;
  ce.kind = ModelKind::Euclidean;
  Rng r1(43), r2(44);
  ThgEncoder enc_t("t", ct, r1), enc_e("e", ce, r2);
  std::vector<Parameter*> pt, pe;
  enc_t.collect(pt);
  enc_e.collect(pe);
  for (std::size_t i = 0; i < pt.size(); ++i) pe[i]->value = pt[i]->value;
  Tensor bias({8});
  bias.fill(0.0);
  bias[0] = 0.4;
  enc_t.q_h->b.value = bias;
  enc_e.q_e->b.value = bias;

  Rng rx(45);
  Tensor x = randn(rx, {3, 8}, 0.5);
  Tape t;
  Var yt = encoder_forward(t, enc_t, t.constant(x));
  Var ye = encoder_forward(t, enc_e, t.constant(x));
  double md = 0.0;
  for (std::size_t i = 0; i < yt.value().size(); ++i)
    md = std::max(md, std::abs(yt.value()[i] - ye.value()[i]));
  CHECK(md > 1e-3);
}

TEST_CASE("no dead parameters: every tensor in the block receives gradient") {
  Rng rng(46);
  for (CompatMode mode :
       {CompatMode::DotProduct, CompatMode::HyperbolicDistance}) {
    for (ModelKind kind : {ModelKind::Thg, ModelKind::Euclidean}) {
      EncoderConfig cfg;
      cfg.d_model = 8;
      cfg.n_heads = 2;
      cfg.compat = mode;
      cfg.kind = kind;
      ThgEncoder enc("enc", cfg, rng);
      Tensor x = randn(rng, {4, 8}, 0.5);
      Tape t;
      t.backward(t.l2_norm(encoder_forward(t, enc, t.constant(x))));
      std::vector<Parameter*> ps;
      enc.collect(ps);
      CHECK(ps.size() == 16);
      for (Parameter* p : ps) {
        INFO(p->name);
        CHECK(fro(p->grad) > 0.0);
      }
    }
  }
}

TEST_CASE("config validation") {
  Rng rng(47);
  EncoderConfig bad;
  bad.d_model = 10;
  bad.n_heads = 3;
  CHECK_THROWS_AS(ThgEncoder("x", bad, rng), ContractError);

  EncoderConfig ok;
  ok.d_model = 8;
  ok.n_heads = 2;
  ThgEncoder enc("enc", ok, rng);
  Tape t;
  // wrong input width
  CHECK_THROWS_AS(thg_attention(t, enc, t.constant(Tensor({2, 9}))),
                  ContractError);
  // wrong mask length
  Tensor x(std::vector<std::size_t>{2, 8});
  std::vector<std::uint8_t> mask{0, 0, 0};
  CHECK_THROWS_AS(thg_attention(t, enc, t.constant(x), &mask), ContractError);
}
