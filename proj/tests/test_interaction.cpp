#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <vector>

#include "fd_util.hpp"
#include "htgnn/graph.hpp"
#include "htgnn/interaction.hpp"

using namespace htgnn;
using ad::Mat;
using ad::Tape;
using ad::Var;
using graph::HeteroTemporalGraph;
using graph::Node;
using graph::NodeKind;
using graph::RelationId;

namespace {

double silu_scalar(double x) { return x / (1.0 + std::exp(-x)); }

Mat random_states(std::mt19937_64& rng, int dim, int n) {
  return fdtest::random_mat(rng, dim, n);
}

// Plain-Eigen recomputation of hetero_layer with explicit per-node loops.
Mat naive_layer(const HeteroTemporalGraph& g, const Mat& states,
                const nn::ParamStore& ps, const std::string& prefix, int layer,
                const itx::InteractionConfig& cfg) {
  const graph::DegreeTable deg = graph::degree_table(g);
  Mat acc = Mat::Zero(cfg.dim, g.n_nodes());
  for (RelationId r : graph::kAllRelations) {
    const auto& edges = g.edges(r);
    if (edges.empty()) continue;
    const std::string base =
        prefix + "/l" + std::to_string(layer) + "/" + graph::relation_name(r);
    const Mat& w = ps.at(base + "/W");
    const bool directed = graph::relation_type(r).directed;

    std::map<int, std::vector<int>> in_nbrs;
    for (auto [i, j] : edges) in_nbrs[j].push_back(i);

    for (const auto& [i, nbrs] : in_nbrs) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(cfg.dim);
      if (!directed) {
        for (int j : nbrs)
          sum += (w * states.col(j)) /
                 (std::sqrt(deg.at(r, i)) * std::sqrt(deg.at(r, j)));
        if (!cfg.single_norm) sum /= static_cast<double>(nbrs.size());
      } else {
        const Mat& a = ps.at(base + "/a");
        const Mat& watt = ps.at(base + "/Watt");
        std::vector<double> scores;
        for (int j : nbrs) {
          Eigen::VectorXd cat(2 * cfg.dim);
          cat << states.col(i), states.col(j);
          Eigen::VectorXd pre = watt * cat;
          for (Eigen::Index k = 0; k < pre.size(); ++k)
            if (pre(k) < 0.0) pre(k) *= cfg.leaky_slope;
          scores.push_back((a.transpose() * pre)(0, 0));
        }
        const double m = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - m);
        for (std::size_t k = 0; k < nbrs.size(); ++k)
          sum += (std::exp(scores[k] - m) / denom) * (w * states.col(nbrs[k]));
        sum /= static_cast<double>(nbrs.size());
      }
      acc.col(i) += sum;
    }
  }
  Mat out = acc.unaryExpr([](double x) { return silu_scalar(x); });
  if (cfg.residual) out += states;
  return out;
}

}  // namespace

TEST_CASE("same-type message sum matches the dense normalized adjacency") {
  std::mt19937_64 rng(11);
  HeteroTemporalGraph g = graph::bridge_topology(5, 3);
  const int n = g.n_nodes();
  const int dim = 4;
  Mat states = random_states(rng, dim, n);
  Mat w = fdtest::random_mat(rng, dim, dim);

  const graph::DegreeTable deg = graph::degree_table(g);
  for (RelationId r : {RelationId::LL, RelationId::HH}) {
    Mat adj = Mat::Zero(n, n);
    for (auto [i, j] : g.edges(r)) adj(i, j) = 1.0;
    REQUIRE(adj.isApprox(adj.transpose()));
    Mat dinv = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) dinv(i, i) = 1.0 / std::sqrt(deg.at(r, i));
    Mat dense = w * states * (dinv * adj * dinv);

    Tape tape;
    Var s = ad::leaf(tape, states);
    Var wv = ad::leaf(tape, w);
    Var got = itx::intra_message_sum(tape, g, r, s, wv, deg);
    REQUIRE((got.value() - dense).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("single-target message matches the closed form") {
  Tape tape;
  Mat w(2, 2);
  w << 1.0, 2.0, -1.0, 0.5;
  Mat hj(2, 1);
  hj << 3.0, -1.0;
  Var m = itx::intra_message(ad::leaf(tape, hj), 4.0, 9.0, ad::leaf(tape, w));
  Mat expect = (w * hj) / 6.0;
  REQUIRE((m.value() - expect).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE_THROWS_AS(
      itx::intra_message(ad::leaf(tape, hj), 0.5, 1.0, ad::leaf(tape, w)),
      ShapeMismatch);
}

TEST_CASE("attention weights sum to one and match direct softmax") {
  std::mt19937_64 rng(7);
  const int dim = 4, d_att = 3;
  Tape tape;
  Var h_i = ad::leaf(tape, random_states(rng, dim, 1));
  std::vector<Var> nbrs;
  for (int k = 0; k < 5; ++k)
    nbrs.push_back(ad::leaf(tape, random_states(rng, dim, 1)));
  Var a = ad::leaf(tape, fdtest::random_mat(rng, d_att, 1));
  Var watt = ad::leaf(tape, fdtest::random_mat(rng, d_att, 2 * dim));
  Var wmsg = ad::leaf(tape, fdtest::random_mat(rng, dim, dim));

  auto [alpha, msgs] = itx::inter_attention(tape, h_i, nbrs, a, watt, wmsg);
  REQUIRE(alpha.value().rows() == 1);
  REQUIRE(alpha.value().cols() == 5);
  REQUIRE(std::abs(alpha.value().sum() - 1.0) < 1e-12);

  // direct recomputation
  std::vector<double> scores;
  for (const Var& nb : nbrs) {
    Eigen::VectorXd cat(2 * dim);
    cat << h_i.value().col(0), nb.value().col(0);
    Eigen::VectorXd pre = watt.value() * cat;
    for (Eigen::Index k = 0; k < pre.size(); ++k)
      if (pre(k) < 0.0) pre(k) *= 0.2;
    scores.push_back((a.value().transpose() * pre)(0, 0));
  }
  const double m = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  for (double s : scores) denom += std::exp(s - m);
  for (int k = 0; k < 5; ++k) {
    const double want = std::exp(scores[k] - m) / denom;
    REQUIRE(std::abs(alpha.value()(0, k) - want) < 1e-12);
    Mat wm = want * (wmsg.value() * nbrs[k].value());
    REQUIRE((msgs.value().col(k) - wm.col(0)).cwiseAbs().maxCoeff() < 1e-12);
  }

  REQUIRE_THROWS_AS(
      itx::inter_attention(tape, h_i, {}, a, watt, wmsg),
      EmptyNeighborhood);
}

TEST_CASE("hetero layer matches a per-node loop recomputation") {
  std::mt19937_64 rng(23);
  for (bool single_norm : {false, true}) {
    for (bool residual : {false, true}) {
      itx::InteractionConfig cfg;
      cfg.dim = 5;
      cfg.d_att = 4;
      cfg.layers = 1;
      cfg.residual = residual;
      cfg.single_norm = single_norm;

      HeteroTemporalGraph g = graph::bearing_topology();
      nn::ParamStore ps;
      itx::register_interaction(ps, "mp", g, cfg);
      ps.init_uniform(rng);
      Mat states = random_states(rng, cfg.dim, g.n_nodes());

      Tape tape;
      nn::ParamVars pv = nn::ParamVars::push_all(tape, ps);
      Var out = itx::hetero_layer(tape, g, ad::leaf(tape, states), pv, "mp", 0,
                                  graph::degree_table(g), cfg);
      Mat want = naive_layer(g, states, ps, "mp", 0, cfg);
      REQUIRE((out.value() - want).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("edgeless graph yields zero states without residual, identity with") {
  std::vector<Node> nodes = {{NodeKind::Low, "D", 0, ""},
                             {NodeKind::Low, "D", 1, ""},
                             {NodeKind::High, "A", 0, ""}};
  HeteroTemporalGraph g =
      HeteroTemporalGraph::from_parts(nodes, {}, /*enforce=*/false);
  itx::InteractionConfig cfg;
  cfg.dim = 3;
  cfg.layers = 1;
  nn::ParamStore ps;
  itx::register_interaction(ps, "mp", g, cfg);  // registers nothing
  std::mt19937_64 rng(3);
  Mat states = random_states(rng, cfg.dim, g.n_nodes());

  for (bool residual : {false, true}) {
    cfg.residual = residual;
    Tape tape;
    nn::ParamVars pv = nn::ParamVars::push_all(tape, ps);
    Var out = itx::hetero_layer(tape, g, ad::leaf(tape, states), pv, "mp", 0,
                                graph::degree_table(g), cfg);
    if (residual) {
      REQUIRE(out.value() == states);
    } else {
      REQUIRE(out.value().cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("zero parameters give zero output states without residual") {
  itx::InteractionConfig cfg;
  cfg.dim = 4;
  cfg.layers = 1;
  cfg.residual = false;
  HeteroTemporalGraph g = graph::bridge_topology();
  nn::ParamStore ps;
  itx::register_interaction(ps, "mp", g, cfg);
  std::mt19937_64 rng(5);
  Mat states = random_states(rng, cfg.dim, g.n_nodes());

  Tape tape;
  nn::ParamVars pv = nn::ParamVars::push_all(tape, ps);
  Var out = itx::hetero_layer(tape, g, ad::leaf(tape, states), pv, "mp", 0,
                              graph::degree_table(g), cfg);
  REQUIRE(out.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("missing relation parameters raise a typed error") {
  itx::InteractionConfig cfg;
  cfg.dim = 3;
  cfg.layers = 1;
  HeteroTemporalGraph g = graph::bridge_topology();
  nn::ParamStore ps;  // nothing registered
  std::mt19937_64 rng(5);
  Mat states = random_states(rng, cfg.dim, g.n_nodes());
  Tape tape;
  nn::ParamVars pv = nn::ParamVars::push_all(tape, ps);
  REQUIRE_THROWS_AS(
      itx::hetero_layer(tape, g, ad::leaf(tape, states), pv, "mp", 0,
                        graph::degree_table(g), cfg),
      MissingParams);
}

TEST_CASE("stacked layers preserve the embedding dimension") {
  itx::InteractionConfig cfg;
  cfg.dim = 6;
  cfg.d_att = 6;
  cfg.layers = 3;
  HeteroTemporalGraph g = graph::bridge_topology();
  nn::ParamStore ps;
  itx::register_interaction(ps, "mp", g, cfg);
  std::mt19937_64 rng(9);
  ps.init_uniform(rng);
  Mat states = random_states(rng, cfg.dim, g.n_nodes());

  Tape tape;
  nn::ParamVars pv = nn::ParamVars::push_all(tape, ps);
  Var h = ad::leaf(tape, states);
  const graph::DegreeTable deg = graph::degree_table(g);
  for (int l = 0; l < cfg.layers; ++l) {
    h = itx::hetero_layer(tape, g, h, pv, "mp", l, deg, cfg);
    REQUIRE(h.value().rows() == cfg.dim);
    REQUIRE(h.value().cols() == g.n_nodes());
  }
  REQUIRE(h.value().allFinite());
}

TEST_CASE("relabeling nodes within a type permutes states bit-identically") {
  std::mt19937_64 rng(31);
  itx::InteractionConfig cfg;
  cfg.dim = 5;
  cfg.d_att = 4;
  cfg.layers = 3;
  HeteroTemporalGraph g = graph::bridge_topology(4, 4);
  nn::ParamStore ps;
  itx::register_interaction(ps, "mp", g, cfg);
  ps.init_uniform(rng);
  Mat states = random_states(rng, cfg.dim, g.n_nodes());

  auto run = [&](const HeteroTemporalGraph& gr, const Mat& st) {
    Tape tape;
    nn::ParamVars pv = nn::ParamVars::push_all(tape, ps);
    Var h = ad::leaf(tape, st);
    const graph::DegreeTable deg = graph::degree_table(gr);
    for (int l = 0; l < cfg.layers; ++l)
      h = itx::hetero_layer(tape, gr, h, pv, "mp", l, deg, cfg);
    return Mat(h.value());
  };
  const Mat base = run(g, states);

  for (int trial = 0; trial < 20; ++trial) {
    // permutation within each node kind (indices 0..3 are L, 4..7 are H)
    std::vector<int> perm = {0, 1, 2, 3, 4, 5, 6, 7};
    std::shuffle(perm.begin(), perm.begin() + 4, rng);
    std::shuffle(perm.begin() + 4, perm.end(), rng);

    std::array<graph::EdgeList, 4> edges;
    for (RelationId r : graph::kAllRelations)
      for (auto [i, j] : g.edges(r))
        edges[static_cast<int>(r)].emplace_back(perm[i], perm[j]);
    HeteroTemporalGraph g2 =
        HeteroTemporalGraph::from_parts(g.nodes(), std::move(edges));

    Mat states2(cfg.dim, g.n_nodes());
    for (int i = 0; i < g.n_nodes(); ++i) states2.col(perm[i]) = states.col(i);

    const Mat out2 = run(g2, states2);
    for (int i = 0; i < g.n_nodes(); ++i)
      for (int d = 0; d < cfg.dim; ++d)
        REQUIRE(out2(d, perm[i]) == base(d, i));
  }
}

TEST_CASE("hetero layer gradients agree with finite differences") {
  std::mt19937_64 rng(41);
  itx::InteractionConfig cfg;
  cfg.dim = 3;
  cfg.d_att = 3;
  cfg.layers = 1;
  HeteroTemporalGraph g = graph::bridge_topology(3, 2);
  nn::ParamStore ps;
  itx::register_interaction(ps, "mp", g, cfg);
  ps.init_uniform(rng);
  Mat states = random_states(rng, cfg.dim, g.n_nodes());

  const graph::DegreeTable deg = graph::degree_table(g);
  double worst = fdtest::grad_check_all(
      ps, {states},
      [&](Tape& tape, const nn::ParamVars& pv, const std::vector<Var>& in) {
        Var out = itx::hetero_layer(tape, g, in[0], pv, "mp", 0, deg, cfg);
        return ad::sum_all(ad::cmul(out, out));
      });
  REQUIRE(worst < 1e-4);
}
