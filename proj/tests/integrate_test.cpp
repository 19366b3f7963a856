// Trajectory machinery: observation cadence, determinism, cross-scheme and
// textbook-reference agreement, simplex invariance, the Lyapunov/Gronwall
// monitors, convergence detection, and basin probing.
#include <gtest/gtest.h>

#include <cmath>
#include <popgame/popgame.hpp>

#include "oracles.hpp"

namespace pg = popgame;

namespace {

pg::Configuration conf2(double a, double b) {
  pg::Vec v(2);
  v << a, b;
  return pg::Configuration(v);
}

pg::Configuration conf3(double a, double b, double c) {
  pg::Vec v(3);
  v << a, b, c;
  return pg::Configuration(v);
}

// Two-action coordination game with its closed-form potential attached.
pg::Game coordination_game() {
  pg::Mat R(2, 2);
  R << 10, 0, 8, 7;
  pg::Game g = pg::Game::linear(R);
  g.attach_potential(pg::binary_potential(R));
  return g;
}

// Two-action game whose second action dominates (constant reward gap 1).
pg::Game dominance_game() {
  pg::Mat R(2, 2);
  R << 2, 0, 3, 1;
  pg::Game g = pg::Game::linear(R);
  g.attach_potential(pg::binary_potential(R));
  return g;
}

pg::Game ternary_game() {
  pg::Mat R = pg::Mat::Zero(3, 3);
  R(0, 0) = 1;
  R(1, 1) = 2;
  R(2, 2) = 3;
  pg::Game g = pg::Game::linear(R);
  pg::Vec d(3);
  d << 1, 2, 3;
  g.attach_potential(pg::coordination_potential(d));
  return g;
}

// Cyclic game: no potential, trajectories orbit the barycenter forever.
pg::Game rsp_game() {
  pg::Mat R(3, 3);
  R << 0, -1, 1, 1, 0, -1, -1, 1, 0;
  return pg::Game::linear(R);
}

int index_of_nearest(const pg::EquilibriumSet& set, const pg::Vec& p) {
  int best = -1;
  double bd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(set.items.size()); ++i) {
    const double d = (set.items[i].point.vec() - p).norm();
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

}  // namespace

TEST(ObservationGrid, MatchesRequestedCadence) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  pg::IntegratorConfig cfg;
  cfg.t_end = 30.0;
  cfg.observe_dt = 0.1;
  const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.6, 0.4), cfg);

  ASSERT_EQ(tr.t.size(), 301u);
  ASSERT_EQ(tr.x.size(), tr.t.size());
  ASSERT_EQ(tr.phi.size(), tr.t.size());
  ASSERT_EQ(tr.phi_dot.size(), tr.t.size());
  ASSERT_EQ(tr.phi_dot_pairwise.size(), tr.t.size());
  EXPECT_EQ(tr.t.front(), 0.0);
  EXPECT_EQ(tr.t.back(), 30.0);  // the end time is recorded verbatim
  for (std::size_t k = 0; k < tr.t.size(); ++k)
    EXPECT_NEAR(tr.t[k], 0.1 * static_cast<double>(k), 1e-12);
  EXPECT_EQ(tr.m, 2);
  EXPECT_GT(tr.steps_accepted, 0);
}

TEST(FixedScheme, ByteIdenticalAcrossRuns) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  pg::IntegratorConfig cfg;
  cfg.method = pg::Method::rk4_fixed;
  cfg.step = 0.01;
  cfg.t_end = 10.0;
  const pg::Trajectory a = pg::integrate(g, rule, conf2(0.6, 0.4), cfg);
  const pg::Trajectory b = pg::integrate(g, rule, conf2(0.6, 0.4), cfg);
  ASSERT_EQ(a.x.size(), b.x.size());
  for (std::size_t k = 0; k < a.x.size(); ++k)
    for (int i = 0; i < 2; ++i)
      EXPECT_EQ(a.x[k][i], b.x[k][i]);  // bitwise, not approximately
  EXPECT_EQ(a.steps_accepted, b.steps_accepted);
}

TEST(AdaptiveScheme, DeterministicAcrossRuns) {
  const pg::Game g = ternary_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::Trajectory a = pg::integrate(g, rule, conf3(0.5, 0.32, 0.18));
  const pg::Trajectory b = pg::integrate(g, rule, conf3(0.5, 0.32, 0.18));
  ASSERT_EQ(a.x.size(), b.x.size());
  for (std::size_t k = 0; k < a.x.size(); ++k)
    for (int i = 0; i < 3; ++i) EXPECT_EQ(a.x[k][i], b.x[k][i]);
  EXPECT_EQ(a.steps_rejected, b.steps_rejected);
}

TEST(SchemeCrossCheck, AdaptiveMatchesFixed) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  pg::IntegratorConfig fixed;
  fixed.method = pg::Method::rk4_fixed;
  fixed.step = 0.002;
  fixed.t_end = 10.0;
  pg::IntegratorConfig adaptive;
  adaptive.t_end = 10.0;
  const pg::Trajectory a = pg::integrate(g, rule, conf2(0.6, 0.4), fixed);
  const pg::Trajectory b = pg::integrate(g, rule, conf2(0.6, 0.4), adaptive);
  ASSERT_EQ(a.t.size(), b.t.size());
  for (std::size_t k = 0; k < a.t.size(); ++k) {
    ASSERT_NEAR(a.t[k], b.t[k], 1e-12);
    EXPECT_NEAR(a.x[k][0], b.x[k][0], 1e-6);
    EXPECT_NEAR(a.x[k][1], b.x[k][1], 1e-6);
  }
}

TEST(FixedScheme, MatchesTextbookReference) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  pg::IntegratorConfig cfg;
  cfg.method = pg::Method::rk4_fixed;
  cfg.step = 0.01;
  cfg.observe_dt = 0.1;
  cfg.t_end = 5.0;
  const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.6, 0.4), cfg);
  EXPECT_EQ(tr.steps_accepted, 500);

  const pg::Vec ref = oracles::rk4_reference(
      [&](const pg::Vec& x) { return pg::vector_field_raw(g, rule, x); },
      conf2(0.6, 0.4).vec(), 5.0, 500);
  EXPECT_NEAR(tr.final_state()[0], ref[0], 1e-10);
  EXPECT_NEAR(tr.final_state()[1], ref[1], 1e-10);
}

TEST(Invariance, FaceStartStaysOnFace) {
  const pg::Game g = ternary_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::Trajectory tr = pg::integrate(g, rule, conf3(0.7, 0.0, 0.3));
  for (const pg::Vec& x : tr.x) EXPECT_EQ(x[1], 0.0);  // exactly, every sample
  // Restricted to actions {1,3} the game is coordination with threshold
  // x_3 = 1/4; starting above it the third action takes over.
  EXPECT_NEAR(tr.final_state()[2], 1.0, 1e-6);
}

TEST(Invariance, VertexIsConstantAndFlaggedAsRest) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::Trajectory tr =
      pg::integrate(g, rule, pg::vertex(2, 0));
  for (const pg::Vec& x : tr.x) {
    EXPECT_EQ(x[0], 1.0);
    EXPECT_EQ(x[1], 0.0);
  }
  bool rest_event = false;
  for (const auto& ev : tr.events)
    if (ev.kind == "converged") rest_event = true;
  EXPECT_TRUE(rest_event);
}

TEST(Invariance, StopAtRestEndsEarly) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  pg::IntegratorConfig cfg;
  cfg.stop_at_rest = true;
  const pg::Trajectory tr =
      pg::integrate(g, rule, pg::vertex(2, 1), cfg);
  ASSERT_EQ(tr.t.size(), 1u);  // the field vanishes before the first step
  EXPECT_EQ(tr.t.front(), 0.0);
}

TEST(Validation, RejectsBadConfigs) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  EXPECT_THROW(pg::integrate(g, rule, pg::centroid(3)),
               pg::ValidationError);
  {
    pg::IntegratorConfig cfg;
    cfg.t_end = 0.0;
    EXPECT_THROW(pg::integrate(g, rule, conf2(0.6, 0.4), cfg),
                 pg::ValidationError);
  }
  {
    pg::IntegratorConfig cfg;
    cfg.observe_dt = 0.0;
    EXPECT_THROW(pg::integrate(g, rule, conf2(0.6, 0.4), cfg),
                 pg::ValidationError);
  }
  {
    pg::IntegratorConfig cfg;
    cfg.rtol = 0.0;
    EXPECT_THROW(pg::integrate(g, rule, conf2(0.6, 0.4), cfg),
                 pg::ValidationError);
  }
  {
    pg::IntegratorConfig cfg;
    cfg.method = pg::Method::rk4_fixed;
    cfg.step = 0.0;
    EXPECT_THROW(pg::integrate(g, rule, conf2(0.6, 0.4), cfg),
                 pg::ValidationError);
  }
}

TEST(Validation, GrossStepLeavingSimplexIsAnIntegrationError) {
  const pg::Game g = dominance_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  pg::IntegratorConfig cfg;
  cfg.method = pg::Method::rk4_fixed;
  cfg.step = 20.0;
  cfg.observe_dt = 20.0;
  cfg.t_end = 20.0;  // one enormous step: the share overshoots far below zero
  EXPECT_THROW(pg::integrate(g, rule, conf2(0.5, 0.5), cfg),
               pg::IntegrationError);
}

TEST(LyapunovMonitor, MonotoneAlongCoordinationFlow) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.6, 0.4));
  const pg::LyapunovReport rep = pg::monitor_lyapunov(tr);
  EXPECT_TRUE(rep.monotone_within_slack);
  EXPECT_GE(rep.min_increment, -rep.slack);
  EXPECT_GE(rep.min_phi_dot, -1e-10);
  EXPECT_LE(rep.max_route_gap, 1e-10);
  EXPECT_EQ(rep.slack, tr.monitor_slack);
  EXPECT_EQ(tr.monitor_slack, 10.0 * pg::IntegratorConfig{}.tolerance_scale());
}

TEST(LyapunovMonitor, RequiresAnAttachedPotential) {
  const pg::Game g = rsp_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::Trajectory tr = pg::integrate(g, rule, conf3(0.5, 0.3, 0.2));
  EXPECT_TRUE(tr.phi.empty());
  EXPECT_FALSE(tr.phi_dot_pairwise.empty());  // reward-route is always there
  EXPECT_THROW(pg::monitor_lyapunov(tr), pg::ValidationError);
}

TEST(Gronwall, InitiallyUsedActionsKeepMass) {
  const pg::Game g = coordination_game();
  {
    const pg::ImitationRule rule = pg::replicator_rule(g);
    const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.6, 0.4));
    const pg::GronwallReport rep = pg::gronwall_positivity_check(tr, g, rule);
    EXPECT_TRUE(rep.holds);
    EXPECT_GE(rep.min_margin, 0.0);
    ASSERT_EQ(rep.rate_bound.size(), 2);
    EXPECT_GT(rep.rate_bound.minCoeff(), 0.0);
  }
  {
    const pg::ImitationRule rule = pg::arctan_rule(g, 21u, 0.0, 1.0);
    const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.6, 0.4));
    const pg::GronwallReport rep = pg::gronwall_positivity_check(tr, g, rule);
    EXPECT_TRUE(rep.holds);
  }
}

TEST(Convergence, BinaryBasinsSplitAtTheThreshold) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::EquilibriumSet set = pg::enumerate_equilibria_linear(g);
  const int i_delta1 = index_of_nearest(set, pg::vertex(2, 0).vec());
  const int i_delta2 = index_of_nearest(set, pg::vertex(2, 1).vec());
  ASSERT_NE(i_delta1, i_delta2);

  {  // below the threshold share 7/9 the second action wins
    const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.6, 0.4));
    const pg::ConvergenceReport rep = pg::detect_convergence(tr, g, set);
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.limit_index, i_delta2);
    EXPECT_EQ(rep.limit_label, "nash");
    EXPECT_GT(rep.t_converged, 0.0);
    EXPECT_LT(rep.final_dist, 1e-4);
  }
  {  // above it the first action wins
    const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.9, 0.1));
    const pg::ConvergenceReport rep = pg::detect_convergence(tr, g, set);
    EXPECT_TRUE(rep.converged);
    EXPECT_EQ(rep.limit_index, i_delta1);
    EXPECT_EQ(rep.limit_label, "nash");
  }
}

TEST(Convergence, CyclingGameStaysUndetermined) {
  const pg::Game g = rsp_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::EquilibriumSet set = pg::enumerate_equilibria_linear(g);
  const pg::Trajectory tr = pg::integrate(g, rule, conf3(0.5, 0.3, 0.2));
  const pg::ConvergenceReport rep = pg::detect_convergence(tr, g, set);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.limit_index, -1);
  EXPECT_EQ(rep.limit_label, "undetermined");
  EXPECT_GT(rep.final_dist, 1e-2);  // the orbit keeps its distance
}

TEST(Convergence, RejectsForeignEquilibriumSet) {
  const pg::Game g = coordination_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::EquilibriumSet foreign =
      pg::enumerate_equilibria_linear(dominance_game());
  const pg::Trajectory tr = pg::integrate(g, rule, conf2(0.6, 0.4));
  EXPECT_THROW(pg::detect_convergence(tr, g, foreign), pg::ValidationError);
}

TEST(BasinProbe, DominatedActionDrainsToOneVertex) {
  const pg::Game g = dominance_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::EquilibriumSet set = pg::enumerate_equilibria_linear(g);
  const int i_delta1 = index_of_nearest(set, pg::vertex(2, 0).vec());
  const int i_delta2 = index_of_nearest(set, pg::vertex(2, 1).vec());

  const pg::BasinMap map = pg::basin_probe(g, rule, set, 9);
  ASSERT_EQ(map.cells.size(), 9u);
  EXPECT_EQ(map.grid_n, 9);
  EXPECT_EQ(map.game_digest, g.digest());
  int to_delta1 = 0, to_delta2 = 0;
  for (const auto& cell : map.cells) {
    ASSERT_GE(cell.limit_index, 0);
    if (cell.limit_index == i_delta1) ++to_delta1;
    if (cell.limit_index == i_delta2) ++to_delta2;
  }
  // Only the vertex fixed at the dominated action stays there; every other
  // start flows to the dominant one.
  EXPECT_EQ(to_delta1, 1);
  EXPECT_EQ(to_delta2, 8);
}

TEST(BasinProbe, TernaryVertexBasinsAreAllNonempty) {
  const pg::Game g = ternary_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::EquilibriumSet set = pg::enumerate_equilibria_linear(g);
  pg::IntegratorConfig cfg;
  cfg.t_end = 60.0;
  const pg::BasinMap map = pg::basin_probe(g, rule, set, 11, cfg);
  ASSERT_EQ(map.cells.size(), 66u);  // 11 * 12 / 2 barycentric points

  std::vector<int> vertex_count(3, 0);
  for (const auto& cell : map.cells) {
    ASSERT_GE(cell.limit_index, 0) << "unresolved start " << cell.start.transpose();
    EXPECT_LE(cell.final_dist, 1e-4);
    for (int v = 0; v < 3; ++v) {
      const double d =
          (set.items[cell.limit_index].point.vec() -
           pg::vertex(3, v).vec()).norm();
      if (d < 1e-9) ++vertex_count[v];
    }
  }
  for (int v = 0; v < 3; ++v) EXPECT_GE(vertex_count[v], 5) << "vertex " << v;
}

TEST(BasinProbe, RejectsUnusableInputs) {
  const pg::Game g = ternary_game();
  const pg::ImitationRule rule = pg::replicator_rule(g);
  const pg::EquilibriumSet set = pg::enumerate_equilibria_linear(g);

  EXPECT_THROW(pg::basin_probe(g, rule, set, 1), pg::ValidationError);

  pg::EquilibriumSet empty;
  empty.game_digest = g.digest();
  EXPECT_THROW(pg::basin_probe(g, rule, empty, 5), pg::ValidationError);

  const pg::EquilibriumSet foreign =
      pg::enumerate_equilibria_linear(dominance_game());
  EXPECT_THROW(pg::basin_probe(g, rule, foreign, 5), pg::ValidationError);

  pg::Mat R4 = pg::Mat::Identity(4, 4);
  const pg::Game g4 = pg::Game::linear(R4);
  pg::EquilibriumSet set4 = pg::enumerate_equilibria_linear(g4);
  EXPECT_THROW(pg::basin_probe(g4, pg::replicator_rule(g4), set4, 5),
               pg::ValidationError);
}
