#include <gtest/gtest.h>

#include <cmath>

#include "rhm/sensitivity.hpp"
#include "rhm/statistics.hpp"

using namespace rhm;

namespace {

ModelParams make(int v, int m, int s, int L, int nc, std::uint64_t seed = 0) {
  ModelParams p;
  p.v = v;
  p.m = m;
  p.s = s;
  p.L = L;
  p.n_c = nc;
  p.seed = seed;
  return p;
}

Representation label_one_hot(int n_c) {
  return [n_c](const Dataset& d) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.size()), n_c);
    for (std::size_t i = 0; i < d.size(); ++i) out(static_cast<Eigen::Index>(i), d.labels[i]) = 1.0;
    return out;
  };
}

}  // namespace

TEST(Sensitivity, LabelRepresentationIsInvariant) {
  auto inst = build_instance(make(4, 3, 2, 3, 3, 2));
  Rng r(1);
  auto probe = sample_training_set(inst, 200, r);
  for (int l = 1; l <= 3; ++l) {
    auto s = synonymic_sensitivity(label_one_hot(3), inst, l, probe, 4, r);
    EXPECT_EQ(s.S, 0.0);
    EXPECT_FALSE(s.degenerate);
  }
}

TEST(Sensitivity, MatchesBruteForcePairs) {
  auto inst = build_instance(make(3, 3, 2, 2, 3, 4));
  Rng r(2);
  auto probe = sample_training_set(inst, 60, r);
  const int R = 3;
  Rng pr(7);
  auto copies = perturbed_copies(inst, probe, 1, R, pr);
  const auto repr = input_representation(3);
  const Eigen::MatrixXd base = repr(probe);

  double num = 0.0;
  for (const auto& c : copies) num += (repr(c) - base).rowwise().squaredNorm().sum();
  num /= static_cast<double>(probe.size() * R);
  double den = 0.0;
  int pairs = 0;
  for (Eigen::Index i = 0; i < base.rows(); ++i)
    for (Eigen::Index j = i + 1; j < base.rows(); ++j) {
      den += (base.row(i) - base.row(j)).squaredNorm();
      ++pairs;
    }
  den /= pairs;

  Rng pr2(7);
  auto s = synonymic_sensitivity(repr, inst, 1, probe, R, pr2);
  EXPECT_NEAR(s.S, num / den, 1e-12);
  EXPECT_GT(s.se, 0.0);
}

TEST(Sensitivity, InvariantToRotationAndScale) {
  auto inst = build_instance(make(4, 4, 2, 2, 4, 5));
  Rng r(3);
  auto probe = sample_training_set(inst, 100, r);
  const auto base = input_representation(4);
  const int dim = 4 * 4;
  Eigen::MatrixXd a(dim, dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = r.normal();
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  Representation rotated = [&](const Dataset& d) { return Eigen::MatrixXd(3.7 * base(d) * Q); };
  for (int l = 1; l <= 2; ++l) {
    Rng p1(11), p2(11);
    auto s1 = synonymic_sensitivity(base, inst, l, probe, 2, p1);
    auto s2 = synonymic_sensitivity(rotated, inst, l, probe, 2, p2);
    EXPECT_NEAR(s1.S, s2.S, 1e-10);
    EXPECT_NEAR(s1.se, s2.se, 1e-10);
  }
}

TEST(Sensitivity, ConstantRepresentationIsDegenerate) {
  auto inst = build_instance(make(3, 2, 2, 2, 2, 1));
  Rng r(4);
  auto probe = sample_training_set(inst, 10, r);
  Representation constant = [](const Dataset& d) {
    return Eigen::MatrixXd(Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(d.size()), 3));
  };
  try {
    synonymic_sensitivity(constant, inst, 1, probe, 2, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate);
  }
}

TEST(Sensitivity, SingleRepresentationRulesAreFlagged) {
  auto inst = build_instance(make(3, 1, 2, 2, 3, 1));
  Rng r(5);
  auto probe = enumerate_dataset(inst);
  auto s = synonymic_sensitivity(input_representation(3), inst, 1, probe, 2, r);
  EXPECT_TRUE(s.degenerate);
  EXPECT_EQ(s.S, 0.0);
}

TEST(Sensitivity, OneStepRepresentationVanishesAtFullDataset) {
  auto inst = build_instance(make(4, 4, 2, 2, 4, 6));
  auto g = g_vectors(exact_tuple_counts(inst), false);
  Rng r(6);
  auto probe = sample_training_set(inst, 200, r);
  auto s = synonymic_sensitivity(onestep_representation(g, 4, 2), inst, 1, probe, 4, r);
  EXPECT_NEAR(s.S, 0.0, 1e-20);
}

TEST(SensitivityProfile, InputLayerMatchesDirectComputation) {
  const auto p = make(4, 4, 2, 2, 4, 7);
  auto inst = build_instance(p);
  Rng r(8);
  auto probe = sample_training_set(inst, 150, r);
  Rng init(1);
  auto net = init_network<double>({ArchKind::tree_cnn, 20}, p, init);
  ProbeConfig cfg;
  cfg.replacements = 3;
  Rng a(9);
  auto rep = sensitivity_profile(net, inst, probe, cfg, a);
  ASSERT_EQ(rep.layers(), 4);
  Rng b(9);
  auto direct = synonymic_sensitivity(input_representation(4), inst, 1, probe, 3, b);
  EXPECT_NEAR(rep.at(0, 1).S, direct.S, 1e-12);
  for (int k = 0; k < rep.layers(); ++k)
    for (int l = 1; l <= 2; ++l) EXPECT_TRUE(std::isfinite(rep.at(k, l).S));
}

TEST(SensitivityProfile, CsvHeader) {
  SensitivityReport rep;
  rep.values = {{{0.5, 0.1, false}}};
  rep.probe_size = 10;
  rep.replacements = 2;
  std::ostringstream os;
  write_sensitivity_csv(os, rep);
  EXPECT_EQ(os.str(), "# schema: rhm-sensitivity-v1\nk,l,S,SE,probe_size,R\n0,1,0.5,0.1,10,2\n");
}
