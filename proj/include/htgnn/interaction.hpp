#pragma once

// Heterogeneous message passing. Same-type relations use degree-normalized
// graph convolution messages; cross-type relations use single-head GATv2
// attention. Per-relation messages are mean-aggregated over the target's
// in-neighborhood, summed across relations, and passed through SiLU with an
// optional residual connection.

#include <string>
#include <vector>

#include "htgnn/ad.hpp"
#include "htgnn/errors.hpp"
#include "htgnn/graph.hpp"
#include "htgnn/params.hpp"

namespace htgnn::itx {

using ad::Mat;
using ad::Tape;
using ad::Var;
using graph::DegreeTable;
using graph::HeteroTemporalGraph;
using graph::RelationId;
using nn::ParamStore;
using nn::ParamVars;

struct InteractionConfig {
  int dim = 10;       // node embedding size, constant across layers
  int d_att = 10;     // attention embedding size
  int layers = 3;
  bool residual = true;
  bool single_norm = false;  // drop the outer 1/|N_r(i)| for same-type relations
  bool attention_intra = false;  // attention on same-type relations too
  double leaky_slope = 0.2;
};

inline void register_interaction(ParamStore& ps, const std::string& prefix,
                                 const HeteroTemporalGraph& g,
                                 const InteractionConfig& cfg) {
  for (int l = 0; l < cfg.layers; ++l) {
    for (graph::RelationId r : graph::kAllRelations) {
      if (g.edges(r).empty()) continue;
      const std::string base =
          prefix + "/l" + std::to_string(l) + "/" + graph::relation_name(r);
      ps.add(base + "/W", cfg.dim, cfg.dim, cfg.dim);
      if (graph::relation_type(r).directed || cfg.attention_intra) {
        ps.add(base + "/a", cfg.d_att, 1, cfg.d_att);
        ps.add(base + "/Watt", cfg.d_att, 2 * cfg.dim, 2 * cfg.dim);
      }
    }
  }
}

// m = (1 / (sqrt(dhat_i) sqrt(dhat_j))) W h_j
inline Var intra_message(Var h_j, double dhat_i, double dhat_j, Var w) {
  if (dhat_i < 1.0 || dhat_j < 1.0)
    throw ShapeMismatch("intra_message: normalized degrees must be >= 1");
  return ad::scale(ad::matmul(w, h_j),
                   1.0 / (std::sqrt(dhat_i) * std::sqrt(dhat_j)));
}

// GATv2 attention over one target's neighborhood. Returns the weights
// (1 x n, summing to one) and the weighted messages (d x n).
inline std::pair<Var, Var> inter_attention(Tape& tape, Var h_i,
                                           const std::vector<Var>& neighbors,
                                           Var a, Var w_att, Var w_msg,
                                           double leaky_slope = 0.2) {
  if (neighbors.empty())
    throw EmptyNeighborhood("inter_attention: no neighbors");
  Var h_src = ad::concat_cols(neighbors);
  Var h_dst = ad::matmul(h_i, ad::constant(tape, Mat::Ones(1, static_cast<Eigen::Index>(
                                                  neighbors.size()))));
  Var cat = ad::concat_rows({h_dst, h_src});
  Var scores = ad::matmul(ad::transpose(a),
                          ad::leaky_relu(ad::matmul(w_att, cat), leaky_slope));
  std::vector<int> seg(neighbors.size(), 0);
  Var alpha = ad::segment_softmax_row(scores, seg, 1);
  Var messages = ad::cmul_row_broadcast(ad::matmul(w_msg, h_src), alpha);
  return {alpha, messages};
}

namespace detail {

inline std::vector<int> in_degree_counts(const HeteroTemporalGraph& g,
                                         RelationId r) {
  std::vector<int> cnt(g.n_nodes(), 0);
  for (auto [i, j] : g.edges(r)) cnt[j] += 1;
  return cnt;
}

}  // namespace detail

// Sum over in-neighborhoods of degree-normalized intra messages for one
// relation; equals D^{-1/2} A D^{-1/2} H^T W^T rows for the relation's
// adjacency (no outer mean, no activation). Exposed for the dense oracle.
inline Var intra_message_sum(Tape& tape, const HeteroTemporalGraph& g,
                             RelationId r, Var states, Var w,
                             const DegreeTable& deg) {
  const auto& edges = g.edges(r);
  std::vector<int> src, dst;
  for (auto [i, j] : edges) {
    src.push_back(i);
    dst.push_back(j);
  }
  Var m = ad::matmul(w, ad::gather_cols(states, src));
  Eigen::RowVectorXd coef(static_cast<Eigen::Index>(edges.size()));
  for (std::size_t e = 0; e < edges.size(); ++e)
    coef(static_cast<Eigen::Index>(e)) =
        1.0 / (std::sqrt(deg.at(r, dst[e])) * std::sqrt(deg.at(r, src[e])));
  m = ad::scale_cols_const(m, coef);
  return ad::segment_sum_cols(m, dst, g.n_nodes());
}

// One heterogeneous layer over all relations present in the graph.
// `states` is (dim x n_nodes) in node_order; returns the updated states.
inline Var hetero_layer(Tape& tape, const HeteroTemporalGraph& g, Var states,
                        const ParamVars& pv, const std::string& prefix, int layer,
                        const DegreeTable& deg, const InteractionConfig& cfg) {
  if (states.value().cols() != g.n_nodes() || states.value().rows() != cfg.dim)
    throw ShapeMismatch("hetero_layer: states must be (dim x n_nodes)");

  Var acc = ad::constant(tape, Mat::Zero(cfg.dim, g.n_nodes()));
  for (RelationId r : graph::kAllRelations) {
    const auto& edges = g.edges(r);
    if (edges.empty()) continue;
    const std::string base =
        prefix + "/l" + std::to_string(layer) + "/" + graph::relation_name(r);
    const bool directed = graph::relation_type(r).directed;
    const bool use_att = directed || cfg.attention_intra;

    std::vector<int> src, dst;
    for (auto [i, j] : edges) {
      src.push_back(i);
      dst.push_back(j);
    }

    Var sum;
    if (!use_att) {
      sum = intra_message_sum(tape, g, r, states, pv[base + "/W"], deg);
    } else {
      Var h_src = ad::gather_cols(states, src);
      Var h_dst = ad::gather_cols(states, dst);
      Var cat = ad::concat_rows({h_dst, h_src});
      Var scores =
          ad::matmul(ad::transpose(pv[base + "/a"]),
                     ad::leaky_relu(ad::matmul(pv[base + "/Watt"], cat),
                                    cfg.leaky_slope));
      Var alpha = ad::segment_softmax_row(scores, dst, g.n_nodes());
      Var m = ad::cmul_row_broadcast(ad::matmul(pv[base + "/W"], h_src), alpha);
      sum = ad::segment_sum_cols(m, dst, g.n_nodes());
    }

    // outer mean over the in-neighborhood (columns without edges stay zero)
    const bool apply_mean = use_att || !cfg.single_norm;
    if (apply_mean) {
      const std::vector<int> cnt = detail::in_degree_counts(g, r);
      Eigen::RowVectorXd inv(g.n_nodes());
      for (int i = 0; i < g.n_nodes(); ++i)
        inv(i) = cnt[i] > 0 ? 1.0 / static_cast<double>(cnt[i]) : 1.0;
      sum = ad::scale_cols_const(sum, inv);
    }
    acc = ad::add(acc, sum);
  }

  Var out = ad::silu(acc);
  if (cfg.residual) out = ad::add(out, states);
  return out;
}

}  // namespace htgnn::itx
