#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bnav/checkpoint.hpp"
#include "bnav/embedding.hpp"
#include "bnav/numerics.hpp"
#include "bnav/rng.hpp"

using namespace bnav;
using namespace bnav::num;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * uniform(rng, -1, 1);
  return m;
}

GruCell<double> random_cell(const std::string& name, Eigen::Index d, Eigen::Index h, Rng& rng) {
  GruCell<double> c(name, d, h);
  c.W.value = random_matrix(3 * h, d, rng, 0.8);
  c.U.value = random_matrix(3 * h, h, rng, 0.8);
  c.b.value = random_matrix(3 * h, 1, rng, 0.3);
  return c;
}

}  // namespace

TEST_CASE("gru zero fixed point") {
  GruCell<double> c("g", 4, 6);
  Eigen::VectorXd x = Eigen::VectorXd::Random(4);
  auto h = gru_step<double>(c, x, Eigen::VectorXd::Zero(6));
  CHECK(h.isZero(0.0));
}

TEST_CASE("gru copies its state through a closed update gate") {
  Rng rng(1);
  auto c = random_cell("g", 3, 5, rng);
  c.b.value.topRows(5).setConstant(-50.0);
  Eigen::VectorXd hp = Eigen::VectorXd::Random(5);
  auto h = gru_step<double>(c, Eigen::VectorXd::Random(3), hp);
  CHECK((h - hp).norm() < 1e-12);
}

TEST_CASE("gru step and run agree") {
  Rng rng(2);
  auto c = random_cell("g", 3, 4, rng);
  Eigen::MatrixXd X = random_matrix(5, 3, rng);
  GruRun<double> run(c);
  auto H = run.run(X);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(4);
  for (int t = 0; t < 5; ++t) {
    h = gru_step<double>(c, X.row(t).transpose(), h);
    CHECK((H.row(t).transpose() - h).norm() < 1e-14);
  }
}

TEST_CASE("gru gradients match central differences") {
  Rng rng(3);
  auto c = random_cell("g", 4, 5, rng);
  Eigen::MatrixXd X = random_matrix(4, 4, rng);
  Eigen::MatrixXd R = random_matrix(4, 5, rng);
  auto loss = [&] {
    GruRun<double> run(c);
    return run.run(X).cwiseProduct(R).sum();
  };
  for (auto* p : c.params()) p->zero_grad();
  GruRun<double> run(c);
  run.run(X);
  Eigen::MatrixXd dX = run.backward(R, c);
  auto res = check_gradients<double>(loss, c.params(), 1e-5, 1e-6);
  CHECK_MESSAGE(res.passed == res.checked, res.worst_param << " " << res.worst_rel_error);

  // Input gradient too.
  for (Eigen::Index i = 0; i < X.size(); ++i) {
    const double s = X.data()[i];
    X.data()[i] = s + 1e-6;
    const double up = loss();
    X.data()[i] = s - 1e-6;
    const double dn = loss();
    X.data()[i] = s;
    CHECK(relative_error(dX.data()[i], (up - dn) / 2e-6) < 1e-5);
  }
}

TEST_CASE("bidirectional encoder") {
  Rng rng(4);
  auto f = random_cell("f", 3, 4, rng);
  auto b = random_cell("b", 3, 4, rng);
  Eigen::MatrixXd x1 = random_matrix(1, 3, rng);
  auto out = encode_bidirectional(f, b, x1);
  REQUIRE(out.rows() == 1);
  REQUIRE(out.cols() == 8);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  CHECK((out.row(0).head(4).transpose() - gru_step<double>(f, x1.row(0).transpose(), z)).norm() < 1e-14);
  CHECK((out.row(0).tail(4).transpose() - gru_step<double>(b, x1.row(0).transpose(), z)).norm() < 1e-14);

  // Tied cells: reversing the input swaps the halves.
  auto tied = f;
  Eigen::MatrixXd X = random_matrix(6, 3, rng);
  Eigen::MatrixXd Xr = X.colwise().reverse();
  auto a = encode_bidirectional(f, tied, X);
  auto r = encode_bidirectional(f, tied, Xr);
  for (int t = 0; t < 6; ++t) CHECK((r.row(t).head(4) - a.row(5 - t).tail(4)).norm() < 1e-14);

  for (int k = 0; k < 10; ++k) {
    const int T = uniform_int(rng, 1, 150);
    auto o = encode_bidirectional(f, b, random_matrix(T, 3, rng));
    CHECK(o.rows() == T);
    CHECK(o.cols() == 8);
  }
  CHECK_THROWS_AS(encode_bidirectional(f, b, Eigen::MatrixXd(0, 3)), ShapeMismatch);
}

TEST_CASE("bidirectional gradients") {
  Rng rng(5);
  auto f = random_cell("f", 3, 4, rng);
  auto b = random_cell("b", 3, 4, rng);
  Eigen::MatrixXd X = random_matrix(5, 3, rng);
  Eigen::MatrixXd R = random_matrix(5, 8, rng);
  auto loss = [&] { return encode_bidirectional(f, b, X).cwiseProduct(R).sum(); };
  for (auto* p : f.params()) p->zero_grad();
  for (auto* p : b.params()) p->zero_grad();
  BiGruRun<double> run(f, b);
  run.run(X);
  run.backward(R, f, b);
  std::vector<Param<double>*> ps = f.params();
  for (auto* p : b.params()) ps.push_back(p);
  auto res = check_gradients<double>(loss, ps, 1e-5, 1e-6);
  CHECK_MESSAGE(res.passed == res.checked, res.worst_param << " " << res.worst_rel_error);
}

TEST_CASE("gru works in single precision") {
  GruCell<float> c("g", 2, 3);
  Rng rng(6);
  c.init(rng);
  Eigen::VectorXf x(2);
  x << 0.5f, -1.0f;
  auto h = gru_step<float>(c, x, Eigen::VectorXf::Zero(3));
  CHECK(h.allFinite());
  CHECK(c.b.value.isZero());
}

TEST_CASE("softmax") {
  Eigen::VectorXd c = Eigen::VectorXd::Constant(7, 3.3);
  auto y = softmax<double>(c);
  for (int i = 0; i < 7; ++i) CHECK(y[i] == doctest::Approx(1.0 / 7).epsilon(1e-15));
  Eigen::VectorXd m(2);
  m << 0.0, -1e9;
  auto ym = softmax<double>(m);
  CHECK(ym[0] == 1.0);
  CHECK(ym[1] == 0.0);
  Eigen::VectorXd dead = Eigen::VectorXd::Constant(3, -1e9);
  CHECK_THROWS_AS(softmax<double>(dead), AllMasked);
  CHECK_THROWS_AS(softmax<double>(Eigen::VectorXd()), AllMasked);

  Rng rng(7);
  Eigen::VectorXd x = random_matrix(6, 1, rng, 3.0);
  Eigen::VectorXd w = random_matrix(6, 1, rng);
  Eigen::VectorXd g = softmax_backward<double>(softmax<double>(x), w);
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd up = x, dn = x;
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    const double num = (softmax<double>(up).dot(w) - softmax<double>(dn).dot(w)) / 2e-6;
    CHECK(relative_error(g[i], num) < 1e-6);
  }
}

TEST_CASE("cross entropy") {
  Eigen::VectorXd o(2);
  o << 10, -10;
  auto ce = cross_entropy<double>(o, 0);
  CHECK(ce.loss <= 1e-4);
  CHECK(ce.loss >= 0);
  Rng rng(8);
  Eigen::VectorXd x = random_matrix(12, 1, rng, 2.0);
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(12);
  mask[3] = mask[7] = -1e9;
  auto c2 = cross_entropy<double>(x, 5, mask);
  for (int i = 0; i < 12; ++i) {
    Eigen::VectorXd up = x, dn = x;
    up[i] += 1e-6;
    dn[i] -= 1e-6;
    const double num = (cross_entropy<double>(up, 5, mask).loss - cross_entropy<double>(dn, 5, mask).loss) / 2e-6;
    CHECK(relative_error(c2.dlogits[i], num) < 1e-6);
  }
  CHECK(c2.probs[3] < 1e-300);
}

TEST_CASE("dropout") {
  Rng rng(9);
  Eigen::MatrixXd x = random_matrix(20, 30, rng);
  CHECK(dropout<double>(x, 0.0, true, rng) == x);
  CHECK(dropout<double>(x, 0.0, false, rng) == x);
  CHECK(dropout<double>(x, 0.5, false, rng) == x);
  auto m = dropout_mask<double>(100, 100, 0.3, true, rng);
  const double zeros = static_cast<double>((m.array() == 0.0).count()) / 1e4;
  CHECK(zeros == doctest::Approx(0.3).epsilon(0.1));
  CHECK(m.maxCoeff() == doctest::Approx(1.0 / 0.7));
  CHECK_THROWS_AS(dropout_mask<double>(2, 2, 1.0, true, rng), InvalidRate);
  CHECK_THROWS_AS(dropout_mask<double>(2, 2, -0.1, false, rng), InvalidRate);
  // Evaluation mode draws nothing.
  Rng a(10), b(10);
  dropout_mask<double>(5, 5, 0.5, false, a);
  CHECK(a() == b());
}

TEST_CASE("adam descends a quadratic") {
  Param<double> w("w", 1, 1);
  w.value(0, 0) = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam<double> opt(cfg);
  const double before = w.value(0, 0) * w.value(0, 0);
  w.grad(0, 0) = 2 * w.value(0, 0);
  opt.step({&w});
  CHECK(w.value(0, 0) * w.value(0, 0) < before);
  // Bias correction: the first step moves by lr.
  CHECK(w.value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  for (int i = 0; i < 200; ++i) {
    w.grad(0, 0) = 2 * w.value(0, 0);
    opt.step({&w});
  }
  CHECK(std::abs(w.value(0, 0)) < 0.1);
}

TEST_CASE("global norm clipping") {
  Param<double> a("a", 2, 1), b("b", 1, 1);
  a.grad << 3, 0;
  b.grad << 4;
  CHECK(clip_global_norm<double>({&a, &b}, 1.0) == doctest::Approx(5.0));
  CHECK(std::sqrt(a.grad.squaredNorm() + b.grad.squaredNorm()) == doctest::Approx(1.0));
  a.grad << 0.3, 0;
  b.grad << 0.4;
  clip_global_norm<double>({&a, &b}, 1.0);
  CHECK(a.grad(0, 0) == 0.3);
}

TEST_CASE("pretrained embeddings") {
  const auto dir = fs::temp_directory_path() / "bnav_emb";
  fs::create_directories(dir);
  const std::string path = (dir / "v.txt").string();
  Rng rng(11);
  std::vector<std::string> words;
  {
    std::ofstream out(path);
    out << "left";
    for (int i = 0; i < 100; ++i) out << ' ' << (i * 0.01 - 0.5);
    out << '\n';
    for (int w = 0; w < 49; ++w) {
      words.push_back("w" + std::to_string(w));
      out << words.back();
      for (int i = 0; i < 100; ++i) out << ' ' << 0.3 * gaussian(rng);
      out << '\n';
    }
  }
  auto vocab = Vocabulary::from_tokens({"left"});
  auto t = load_pretrained(path, vocab, 100, 0);
  for (int i = 0; i < 100; ++i) CHECK(t.row("left")(i) == doctest::Approx(i * 0.01 - 0.5).epsilon(1e-12));

  std::vector<std::string> mixed = words;
  for (int k = 0; k < 50; ++k) mixed.push_back("oov" + std::to_string(k));
  auto v2 = Vocabulary::from_tokens(mixed);
  auto t1 = load_pretrained(path, v2, 100, 3);
  auto t2 = load_pretrained(path, v2, 100, 3);
  CHECK(t1.vectors == t2.vectors);
  CHECK(t1.oov_count >= 50);
  double in = 0, out = 0;
  for (const auto& w : words) in += t1.row(w).norm();
  for (int k = 0; k < 50; ++k) out += t1.row("oov" + std::to_string(k)).norm();
  in /= static_cast<double>(words.size());
  out /= 50.0;
  CHECK(std::abs(out - in) <= 0.1 * in);

  {
    std::ofstream bad((dir / "bad.txt").string());
    bad << "a 1 2 3\nb 1 x 3\n";
  }
  try {
    load_pretrained((dir / "bad.txt").string(), vocab, 3);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  {
    std::ofstream bad((dir / "arity.txt").string());
    bad << "a 1 2\n";
  }
  CHECK_THROWS_AS(load_pretrained((dir / "arity.txt").string(), vocab, 3), ParseError);
  CHECK_THROWS_AS(load_pretrained((dir / "nope.txt").string(), vocab, 3), IoError);
}

TEST_CASE("vocabulary") {
  auto v = Vocabulary::from_corpus({{"b", "a"}, {"a", "c"}});
  CHECK(v.size() == 4);
  CHECK(v.tokens()[0] == "<unk>");
  CHECK(v.id("a") == 1);
  CHECK(v.id("zzz") == 0);
  CHECK(hashed_vector("a", 1, 8) == hashed_vector("a", 1, 8));
  CHECK(hashed_vector("a", 1, 8) != hashed_vector("a", 2, 8));
}

TEST_CASE("checkpoint round trip is exact") {
  Checkpoint c;
  c.meta["format"] = "test";
  c.meta["x"] = "0.10000000000000001";
  c.vocab = {"<unk>", "left", "right"};
  Rng rng(12);
  c.tensors["a"] = random_matrix(3, 5, rng);
  c.tensors["b.W"] = random_matrix(1, 1, rng);
  c.tensors["a"](1, 2) = -0.0;
  c.tensors["a"](0, 0) = 1e-310;
  const std::string path = (fs::temp_directory_path() / "bnav_ckpt_test.ckpt").string();
  save_checkpoint(c, path);
  auto back = load_checkpoint(path);
  CHECK(back == c);
  CHECK(std::signbit(back.tensor("a")(1, 2)));
  CHECK_THROWS_AS(back.tensor("nope"), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(path + ".missing"), IoError);
  {
    std::ofstream junk(path + ".junk");
    junk << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path + ".junk"), ParseError);
}
