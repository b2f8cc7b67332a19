#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <string>

#include "echelon/gcn.hpp"
#include "echelon/supply_net.hpp"

using namespace echelon;

namespace {

const std::string kConfigDir = ECHELON_CONFIG_DIR;

Mat random_mat(int r, int c, Rng& rng) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Mat permutation_matrix(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(rng.below(
                  static_cast<std::uint64_t>(i + 1)))]);
  Mat p = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

}  // namespace

TEST_CASE("single node normalizes to the identity") {
  const Mat a = Mat::Zero(1, 1);
  REQUIRE(normalize_adjacency(a)(0, 0) == 1.0);
}

TEST_CASE("two connected nodes normalize to all halves") {
  Mat a(2, 2);
  a << 0, 1, 1, 0;
  const Mat ahat = normalize_adjacency(a);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) REQUIRE(std::abs(ahat(i, j) - 0.5) < 1e-12);
}

TEST_CASE("normalized adjacency matches a direct computation on net6") {
  const SupplyNetwork net = load_network_file(kConfigDir + "/net6.txt");
  const Mat a = adjacency(net).symmetric;
  const Mat ahat = normalize_adjacency(a);
  // direct arithmetic oracle
  const Mat ai = a + Mat::Identity(6, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const double expected =
          ai(i, j) / std::sqrt(ai.row(i).sum() * ai.row(j).sum());
      REQUIRE(std::abs(ahat(i, j) - expected) < 1e-12);
    }
  REQUIRE(ahat.isApprox(ahat.transpose()));
  REQUIRE(ahat.minCoeff() >= 0.0);
}

TEST_CASE("normalize rejects asymmetric or self-looped input") {
  Mat bad(2, 2);
  bad << 0, 1, 0, 0;
  REQUIRE_THROWS_AS(normalize_adjacency(bad), std::invalid_argument);
  Mat diag(2, 2);
  diag << 1, 1, 1, 0;
  REQUIRE_THROWS_AS(normalize_adjacency(diag), std::invalid_argument);
}

TEST_CASE("zero features give zero embeddings (no biases)") {
  Rng rng(3);
  Mat a(3, 3);
  a << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const GcnStack stack = make_gcn(4, 8, 5, normalize_adjacency(a), rng);
  const Mat h = gcn_forward(stack, Mat::Zero(3, 4));
  REQUIRE(h.norm() == 0.0);
}

TEST_CASE("single node gcn collapses to chained relu linear maps") {
  Rng rng(4);
  const GcnStack stack =
      make_gcn(4, 8, 5, normalize_adjacency(Mat::Zero(1, 1)), rng);
  const Mat x = random_mat(1, 4, rng);
  const Mat expected = (((x * stack.w1).cwiseMax(0.0) * stack.w2)
                            .cwiseMax(0.0) *
                        stack.w3)
                           .cwiseMax(0.0);
  REQUIRE(gcn_forward(stack, x).isApprox(expected));
}

TEST_CASE("gcn is permutation equivariant and the pool is invariant") {
  Rng rng(5);
  const SupplyNetwork net = load_network_file(kConfigDir + "/net18.txt");
  const Mat a = adjacency(net).symmetric;
  for (int trial = 0; trial < 10; ++trial) {
    const Mat p = permutation_matrix(18, rng);
    const Mat x = random_mat(18, 7, rng);
    GcnStack stack = make_gcn(7, 16, 6, normalize_adjacency(a), rng);
    const Mat h = gcn_forward(stack, x);

    GcnStack permuted = stack;
    permuted.a_hat = normalize_adjacency(p * a * p.transpose());
    const Mat h_perm = gcn_forward(permuted, p * x);
    REQUIRE(h_perm.isApprox(p * h, 1e-10));
    REQUIRE(global_mean_pool(h_perm).isApprox(global_mean_pool(h), 1e-10));
  }
}

TEST_CASE("global mean pool averages columns") {
  Mat h(2, 2);
  h << 1, 2, 3, 4;
  const Vec pooled = global_mean_pool(h);
  REQUIRE(pooled(0) == 2.0);
  REQUIRE(pooled(1) == 3.0);

  Mat same(4, 3);
  same.rowwise() = Eigen::RowVector3d(7.0, -1.0, 0.5);
  REQUIRE(global_mean_pool(same).isApprox(Vec(Eigen::Vector3d(7.0, -1.0, 0.5))));

  REQUIRE_THROWS_AS(global_mean_pool(Mat(0, 3)), std::invalid_argument);
}

TEST_CASE("pooled gcn gradients match finite differences") {
  Rng rng(6);
  Mat a(4, 4);
  a << 0, 1, 0, 1,
       1, 0, 1, 0,
       0, 1, 0, 0,
       1, 0, 0, 0;
  const Mat ahat = normalize_adjacency(a);
  for (int trial = 0; trial < 3; ++trial) {
    GcnStack stack = make_gcn(3, 6, 4, ahat, rng);
    const Mat x = random_mat(4, 3, rng);
    const Vec u = random_mat(4, 1, rng).col(0);  // weights on pooled output

    auto loss = [&](const GcnStack& s, const Mat& feats) {
      return global_mean_pool(gcn_forward(s, feats)).dot(u);
    };

    GcnTape tape;
    gcn_forward(stack, x, &tape);
    GcnGrads grads = GcnGrads::zeros_like(stack);
    const Mat dx =
        gcn_backward(stack, tape, global_mean_pool_backward(u, 4), grads);

    const double h = 1e-6;
    double worst = 0.0;
    auto check = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + h;
      const double up = loss(stack, x);
      param = keep - h;
      const double down = loss(stack, x);
      param = keep;
      const double numeric = (up - down) / (2 * h);
      const double scale =
          std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / scale);
    };
    for (int i = 0; i < stack.w1.rows(); ++i)
      for (int j = 0; j < stack.w1.cols(); ++j)
        check(stack.w1(i, j), grads.w1(i, j));
    for (int i = 0; i < stack.w2.rows(); ++i)
      for (int j = 0; j < stack.w2.cols(); ++j)
        check(stack.w2(i, j), grads.w2(i, j));
    for (int i = 0; i < stack.w3.rows(); ++i)
      for (int j = 0; j < stack.w3.cols(); ++j)
        check(stack.w3(i, j), grads.w3(i, j));
    Mat xm = x;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) {
        const double keep = xm(i, j);
        xm(i, j) = keep + h;
        const double up = loss(stack, xm);
        xm(i, j) = keep - h;
        const double down = loss(stack, xm);
        xm(i, j) = keep;
        const double numeric = (up - down) / (2 * h);
        const double scale =
            std::max({std::abs(dx(i, j)), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(dx(i, j) - numeric) / scale);
      }
    REQUIRE(worst < 1e-6);
  }
}

TEST_CASE("pooled width is fixed across the four shipped networks") {
  Rng rng(7);
  for (const auto& file : {"net6.txt", "net12.txt", "net18.txt", "net24.txt"}) {
    const SupplyNetwork net =
        load_network_file(kConfigDir + "/" + std::string(file));
    const GcnStack stack = make_gcn(
        9, 64, 32, normalize_adjacency(adjacency(net).symmetric), rng);
    const Mat h = gcn_forward(stack, Mat::Zero(net.size(), 9));
    REQUIRE(global_mean_pool(h).size() == 32);
  }
}
