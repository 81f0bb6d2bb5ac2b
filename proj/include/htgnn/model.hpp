#pragma once

// End-to-end models: the heterogeneous temporal GNN (encoders, three
// relation-typed message-passing layers, BiLSTM readout, perceptron head)
// plus its ablation and baseline variants, input/target normalization, and
// checkpoint serialization.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htgnn/ad.hpp"
#include "htgnn/encoders.hpp"
#include "htgnn/errors.hpp"
#include "htgnn/graph.hpp"
#include "htgnn/interaction.hpp"
#include "htgnn/params.hpp"
#include "htgnn/sample.hpp"

namespace htgnn::model {

using ad::Mat;
using ad::Tape;
using ad::Var;
using graph::HeteroTemporalGraph;
using nn::ParamStore;
using nn::ParamVars;
using json = nlohmann::json;

enum class Variant {
  HTGNN,
  HTGNN_wo_EXO,
  GRU_GAT_homog,
  GRU_GCN_homog,
  CNN_GCN_homog,
  CNN_GCN_vib,
  GRU_GCN_vib,
  BiLSTM,
  CNN1D,
  GCNN1D,
  MTGAT,
};

inline const std::vector<std::pair<Variant, std::string>>& variant_names() {
  static const std::vector<std::pair<Variant, std::string>> names = {
      {Variant::HTGNN, "HTGNN"},
      {Variant::HTGNN_wo_EXO, "HTGNN_wo_EXO"},
      {Variant::GRU_GAT_homog, "GRU_GAT_homog"},
      {Variant::GRU_GCN_homog, "GRU_GCN_homog"},
      {Variant::CNN_GCN_homog, "CNN_GCN_homog"},
      {Variant::CNN_GCN_vib, "CNN_GCN_vib"},
      {Variant::GRU_GCN_vib, "GRU_GCN_vib"},
      {Variant::BiLSTM, "BiLSTM"},
      {Variant::CNN1D, "CNN1D"},
      {Variant::GCNN1D, "GCNN1D"},
      {Variant::MTGAT, "MTGAT-style"},
  };
  return names;
}

inline std::string variant_name(Variant v) {
  for (const auto& [var, name] : variant_names())
    if (var == v) return name;
  throw InvalidVariant("unknown variant id");
}

inline Variant variant_from_name(const std::string& s) {
  for (const auto& [var, name] : variant_names())
    if (name == s || (var == Variant::MTGAT && s == "MTGAT")) return var;
  throw InvalidVariant("'" + s + "' is not a model variant");
}

// Graph-structured ablation grid (the non-sequence variants).
inline std::vector<Variant> ablation_variants() {
  return {Variant::HTGNN,         Variant::HTGNN_wo_EXO,
          Variant::GRU_GAT_homog, Variant::GRU_GCN_homog,
          Variant::CNN_GCN_homog, Variant::CNN_GCN_vib,
          Variant::GRU_GCN_vib};
}

struct ModelConfig {
  Variant variant = Variant::HTGNN;
  int d_w = 5;          // exogenous embedding size
  int d = 10;           // node embedding size (low = high = GNN width)
  int d_graph = 40;     // per-node projection before the readout BiLSTM
  int lstm_hidden = 40;
  int head_hidden = 40;
  int window = 30;      // L
  int d_y = 2;
  int n_w = 1;          // exogenous channel count
  bool residual = true;
  bool single_norm = false;
  bool silu_in_gru = true;
  double dropout = 0.2;

  // high-frequency encoder stacks (channel lists include the input channel)
  int small_kernel = 3, small_dilation = 1;
  int large_kernel = 5, large_dilation = 2;
  std::vector<int> small_channels = {1, 4, 4, 1};
  std::vector<int> large_channels = {1, 4, 4, 1};

  int d_small() const { return d / 2; }
  int d_large() const { return d - d / 2; }

  enc::HighFreqSpec high_spec() const {
    enc::HighFreqSpec s;
    s.small = {small_kernel, small_dilation, small_channels};
    s.large = {large_kernel, large_dilation, large_channels};
    s.d_small = d_small();
    s.d_large = d_large();
    s.window = window;
    return s;
  }

  itx::InteractionConfig interaction_config() const {
    itx::InteractionConfig c;
    c.dim = d;
    c.d_att = d;
    c.layers = 3;
    c.residual = residual;
    c.single_norm = single_norm;
    c.attention_intra = variant == Variant::GRU_GAT_homog ||
                        variant == Variant::MTGAT;
    return c;
  }

  void validate() const {
    for (int v : {d_w, d, d_graph, lstm_hidden, head_hidden, window, d_y, n_w})
      if (v <= 0) throw ConfigError("model dims must be positive");
    if (small_channels.size() < 2 || large_channels.size() < 2 ||
        small_channels.front() != 1 || large_channels.front() != 1 ||
        small_channels.back() != 1 || large_channels.back() != 1)
      throw ConfigError("conv stacks must map 1 channel to 1 channel");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("dropout must be in [0, 1)");
  }

  json to_json() const {
    return json{{"variant", variant_name(variant)},
                {"d_w", d_w},
                {"d", d},
                {"d_graph", d_graph},
                {"lstm_hidden", lstm_hidden},
                {"head_hidden", head_hidden},
                {"window", window},
                {"d_y", d_y},
                {"n_w", n_w},
                {"residual", residual},
                {"single_norm", single_norm},
                {"silu_in_gru", silu_in_gru},
                {"dropout", dropout},
                {"small_kernel", small_kernel},
                {"small_dilation", small_dilation},
                {"large_kernel", large_kernel},
                {"large_dilation", large_dilation},
                {"small_channels", small_channels},
                {"large_channels", large_channels}};
  }

  static ModelConfig from_json(const json& j) {
    ModelConfig c;
    const json defaults = c.to_json();
    for (const auto& [key, val] : j.items())
      if (!defaults.contains(key))
        throw ConfigError("unknown model config key '" + key + "'");
    if (j.contains("variant"))
      c.variant = variant_from_name(j.at("variant").get<std::string>());
    auto get_int = [&](const char* k, int& out) {
      if (j.contains(k)) out = j.at(k).get<int>();
    };
    auto get_bool = [&](const char* k, bool& out) {
      if (j.contains(k)) out = j.at(k).get<bool>();
    };
    get_int("d_w", c.d_w);
    get_int("d", c.d);
    get_int("d_graph", c.d_graph);
    get_int("lstm_hidden", c.lstm_hidden);
    get_int("head_hidden", c.head_hidden);
    get_int("window", c.window);
    get_int("d_y", c.d_y);
    get_int("n_w", c.n_w);
    get_bool("residual", c.residual);
    get_bool("single_norm", c.single_norm);
    get_bool("silu_in_gru", c.silu_in_gru);
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    get_int("small_kernel", c.small_kernel);
    get_int("small_dilation", c.small_dilation);
    get_int("large_kernel", c.large_kernel);
    get_int("large_dilation", c.large_dilation);
    if (j.contains("small_channels"))
      c.small_channels = j.at("small_channels").get<std::vector<int>>();
    if (j.contains("large_channels"))
      c.large_channels = j.at("large_channels").get<std::vector<int>>();
    c.validate();
    return c;
  }
};

// Per-channel input standardization + per-target standardization. Identity
// until fitted, so untrained zero-parameter models predict exactly zero.
struct Normalizer {
  Eigen::VectorXd in_mean, in_std;  // size = N_L + N_H + N_w
  Eigen::VectorXd y_mean, y_std;    // size = d_y

  bool fitted() const { return in_mean.size() > 0; }

  static Normalizer fit(const std::vector<SensorWindow>& samples) {
    if (samples.empty()) throw ConfigError("cannot fit normalizer on no data");
    const auto& s0 = samples.front();
    const Eigen::Index c = s0.x_l.rows() + s0.x_h.rows() + s0.w.rows();
    Normalizer n;
    n.in_mean = Eigen::VectorXd::Zero(c);
    n.in_std = Eigen::VectorXd::Zero(c);
    n.y_mean = Eigen::VectorXd::Zero(s0.y.size());
    n.y_std = Eigen::VectorXd::Zero(s0.y.size());
    double count = 0.0;
    for (const SensorWindow& s : samples) {
      Eigen::Index r = 0;
      for (const Mat* m : {&s.x_l, &s.x_h, &s.w}) {
        n.in_mean.segment(r, m->rows()) += m->rowwise().mean();
        r += m->rows();
      }
      n.y_mean += s.y;
      count += 1.0;
    }
    n.in_mean /= count;
    n.y_mean /= count;
    double t_count = 0.0;
    for (const SensorWindow& s : samples) {
      Eigen::Index r = 0;
      for (const Mat* m : {&s.x_l, &s.x_h, &s.w}) {
        n.in_std.segment(r, m->rows()) +=
            (m->colwise() - Eigen::VectorXd(n.in_mean.segment(r, m->rows())))
                .array()
                .square()
                .matrix()
                .rowwise()
                .sum();
        r += m->rows();
      }
      n.y_std += (s.y - n.y_mean).array().square().matrix();
      t_count += static_cast<double>(s.x_l.cols());
    }
    n.in_std = (n.in_std / t_count).cwiseSqrt().cwiseMax(1e-8);
    n.y_std = (n.y_std / count).cwiseSqrt().cwiseMax(1e-8);
    return n;
  }

  SensorWindow apply(const SensorWindow& s) const {
    if (!fitted()) return s;
    SensorWindow out = s;
    Eigen::Index r = 0;
    for (Mat* m : {&out.x_l, &out.x_h, &out.w}) {
      if (r + m->rows() > in_mean.size())
        throw ShapeMismatch("normalizer channel count mismatch");
      m->colwise() -= Eigen::VectorXd(in_mean.segment(r, m->rows()));
      m->array().colwise() /= in_std.segment(r, m->rows()).array();
      r += m->rows();
    }
    if (out.y.size() > 0) {
      if (out.y.size() != y_mean.size())
        throw ShapeMismatch("normalizer target count mismatch");
      out.y = (out.y - y_mean).cwiseQuotient(y_std);
    }
    return out;
  }

  Eigen::VectorXd denorm_y(const Eigen::VectorXd& y) const {
    if (!fitted()) return y;
    return y.cwiseProduct(y_std) + y_mean;
  }

  json to_json() const {
    auto vec = [](const Eigen::VectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    return json{{"in_mean", vec(in_mean)},
                {"in_std", vec(in_std)},
                {"y_mean", vec(y_mean)},
                {"y_std", vec(y_std)}};
  }

  static Normalizer from_json(const json& j) {
    auto vec = [&](const char* k) {
      const auto v = j.at(k).get<std::vector<double>>();
      return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                               static_cast<Eigen::Index>(v.size()))
          .eval();
    };
    Normalizer n;
    n.in_mean = vec("in_mean");
    n.in_std = vec("in_std");
    n.y_mean = vec("y_mean");
    n.y_std = vec("y_std");
    return n;
  }
};

namespace detail {

inline Mat dropout_mask(std::mt19937_64& rng, Eigen::Index rows,
                        Eigen::Index cols, double rate) {
  std::bernoulli_distribution keep(1.0 - rate);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return m;
}

// ---- LSTM -------------------------------------------------------------------

inline void register_lstm_dir(ParamStore& ps, const std::string& p, int in,
                              int h) {
  for (const char* g : {"i", "f", "o", "c"}) {
    ps.add(p + "/W" + g, h, in, in);
    ps.add(p + "/U" + g, h, h, h);
    ps.add(p + "/b" + g, h, 1, 0);
  }
}

inline void register_bilstm(ParamStore& ps, const std::string& prefix, int in,
                            int h) {
  register_lstm_dir(ps, prefix + "/f", in, h);
  register_lstm_dir(ps, prefix + "/b", in, h);
}

inline Var run_lstm_dir(Tape& tape, const ParamVars& pv, const std::string& p,
                        Var seq, int hidden, bool reverse) {
  const Eigen::Index steps = seq.value().cols();
  Var h = ad::constant(tape, Mat::Zero(hidden, 1));
  Var c = ad::constant(tape, Mat::Zero(hidden, 1));
  Var wi = pv[p + "/Wi"], ui = pv[p + "/Ui"], bi = pv[p + "/bi"];
  Var wf = pv[p + "/Wf"], uf = pv[p + "/Uf"], bf = pv[p + "/bf"];
  Var wo = pv[p + "/Wo"], uo = pv[p + "/Uo"], bo = pv[p + "/bo"];
  Var wc = pv[p + "/Wc"], uc = pv[p + "/Uc"], bc = pv[p + "/bc"];
  for (Eigen::Index k = 0; k < steps; ++k) {
    const Eigen::Index t = reverse ? steps - 1 - k : k;
    Var x = ad::slice_cols(seq, t, 1);
    Var i = ad::sigmoid(ad::add(ad::add(ad::matmul(wi, x), ad::matmul(ui, h)), bi));
    Var f = ad::sigmoid(ad::add(ad::add(ad::matmul(wf, x), ad::matmul(uf, h)), bf));
    Var o = ad::sigmoid(ad::add(ad::add(ad::matmul(wo, x), ad::matmul(uo, h)), bo));
    Var g = ad::tanh_fn(ad::add(ad::add(ad::matmul(wc, x), ad::matmul(uc, h)), bc));
    c = ad::add(ad::cmul(f, c), ad::cmul(i, g));
    h = ad::cmul(o, ad::tanh_fn(c));
  }
  return h;
}

// Final forward and backward hidden states concatenated: (2*hidden x 1).
inline Var run_bilstm(Tape& tape, const ParamVars& pv,
                      const std::string& prefix, Var seq, int hidden) {
  Var hf = run_lstm_dir(tape, pv, prefix + "/f", seq, hidden, false);
  Var hb = run_lstm_dir(tape, pv, prefix + "/b", seq, hidden, true);
  return ad::concat_rows({hf, hb});
}

// ---- perceptron head ----------------------------------------------------------

inline void register_head(ParamStore& ps, const std::string& prefix, int in,
                          int hidden, int out) {
  ps.add(prefix + "/W0", hidden, in, in);
  ps.add(prefix + "/b0", hidden, 1, 0);
  ps.add(prefix + "/W1", hidden, hidden, hidden);
  ps.add(prefix + "/b1", hidden, 1, 0);
  ps.add(prefix + "/W2", out, hidden, hidden);
  ps.add(prefix + "/b2", out, 1, 0);
}

inline Var run_head(Tape& tape, const ParamVars& pv, const std::string& prefix,
                    Var x, bool training, std::mt19937_64* rng, double rate) {
  Var h = ad::silu(ad::add(ad::matmul(pv[prefix + "/W0"], x), pv[prefix + "/b0"]));
  if (training && rng && rate > 0.0)
    h = ad::dropout_mask(h, dropout_mask(*rng, h.value().rows(), 1, rate));
  h = ad::silu(ad::add(ad::matmul(pv[prefix + "/W1"], h), pv[prefix + "/b1"]));
  if (training && rng && rate > 0.0)
    h = ad::dropout_mask(h, dropout_mask(*rng, h.value().rows(), 1, rate));
  return ad::add(ad::matmul(pv[prefix + "/W2"], h), pv[prefix + "/b2"]);
}

// ---- vector-input GRU (node-sequence consumer for the MTGAT-style model) ------

inline void register_gru_seq(ParamStore& ps, const std::string& p, int in,
                             int h) {
  for (const char* g : {"r", "z", "n"}) {
    ps.add(p + "/W" + std::string(g), h, in, in);
    ps.add(p + "/U" + std::string(g), h, h, h);
    ps.add(p + "/b" + std::string(g), h, 1, 0);
  }
}

inline Var run_gru_seq(Tape& tape, const ParamVars& pv, const std::string& p,
                       Var seq, int hidden) {
  const Eigen::Index steps = seq.value().cols();
  Var h = ad::constant(tape, Mat::Zero(hidden, 1));
  Var wr = pv[p + "/Wr"], ur = pv[p + "/Ur"], br = pv[p + "/br"];
  Var wz = pv[p + "/Wz"], uz = pv[p + "/Uz"], bz = pv[p + "/bz"];
  Var wn = pv[p + "/Wn"], un = pv[p + "/Un"], bn = pv[p + "/bn"];
  for (Eigen::Index t = 0; t < steps; ++t) {
    Var x = ad::slice_cols(seq, t, 1);
    Var r = ad::sigmoid(ad::add(ad::add(ad::matmul(wr, x), ad::matmul(ur, h)), br));
    Var z = ad::sigmoid(ad::add(ad::add(ad::matmul(wz, x), ad::matmul(uz, h)), bz));
    Var g = ad::tanh_fn(
        ad::add(ad::add(ad::matmul(wn, x), ad::cmul(r, ad::matmul(un, h))), bn));
    Var ones = ad::constant(tape, Mat::Ones(hidden, 1));
    h = ad::add(ad::cmul(ad::sub(ones, z), g), ad::cmul(z, h));
  }
  return h;
}

// Plain (ungated) multichannel conv stack used by the sequence baselines.
inline void register_conv_stack(ParamStore& ps, const std::string& prefix,
                                const std::vector<int>& channels, int kernel,
                                int d_w, enc::GateMode mode) {
  for (std::size_t l = 0; l + 1 < channels.size(); ++l)
    enc::register_gcl(ps, prefix + "/gcl" + std::to_string(l), channels[l],
                      channels[l + 1], kernel, d_w, mode);
}

inline Var run_conv_stack(Tape& tape, Var x, Var h_w, const ParamVars& pv,
                          const std::string& prefix,
                          const std::vector<int>& channels, int kernel,
                          int dilation, enc::GateMode mode) {
  Var h = x;
  for (std::size_t l = 0; l + 1 < channels.size(); ++l) {
    h = enc::gated_conv_layer(tape, h, h_w, pv,
                              prefix + "/gcl" + std::to_string(l), kernel,
                              dilation, mode);
    h = ad::silu(h);
  }
  return h;
}

inline Mat stacked_channels(const SensorWindow& s, bool include_w) {
  Mat out(s.x_l.rows() + s.x_h.rows() + (include_w ? s.w.rows() : 0),
          s.x_l.cols() > 0 ? s.x_l.cols() : s.x_h.cols());
  Eigen::Index r = 0;
  out.middleRows(r, s.x_l.rows()) = s.x_l;
  r += s.x_l.rows();
  out.middleRows(r, s.x_h.rows()) = s.x_h;
  r += s.x_h.rows();
  if (include_w) out.middleRows(r, s.w.rows()) = s.w;
  return out;
}

// Fully connected homogeneous graph with n single-type nodes.
inline HeteroTemporalGraph complete_homog_graph(int n) {
  std::vector<graph::Node> nodes;
  for (int i = 0; i < n; ++i)
    nodes.push_back({graph::NodeKind::Low, "C", i, ""});
  std::array<graph::EdgeList, 4> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      edges[static_cast<int>(graph::RelationId::LL)].emplace_back(i, j);
  return HeteroTemporalGraph::from_parts(std::move(nodes), std::move(edges),
                                         /*enforce=*/false);
}

// High-frequency induced subgraph (vibration-only variants).
inline HeteroTemporalGraph high_subgraph(const HeteroTemporalGraph& g) {
  std::vector<int> keep = g.nodes_of_kind(graph::NodeKind::High);
  std::vector<int> remap(g.n_nodes(), -1);
  std::vector<graph::Node> nodes;
  for (std::size_t k = 0; k < keep.size(); ++k) {
    remap[keep[k]] = static_cast<int>(k);
    nodes.push_back(g.node(keep[k]));
  }
  std::array<graph::EdgeList, 4> edges;
  for (auto [i, j] : g.edges(graph::RelationId::HH))
    edges[static_cast<int>(graph::RelationId::HH)].emplace_back(remap[i],
                                                                remap[j]);
  return HeteroTemporalGraph::from_parts(std::move(nodes), std::move(edges),
                                         /*enforce=*/false);
}

}  // namespace detail

class Model {
 public:
  ModelConfig cfg;
  HeteroTemporalGraph base_graph;  // heterogeneous sensor graph of the dataset
  HeteroTemporalGraph graph;       // graph actually used for message passing
  graph::DegreeTable deg;
  ParamStore params;
  Normalizer norm;
  int n_l = 0, n_h = 0;

  // Captured intermediate values (evaluated, not differentiable).
  struct Trace {
    Mat pre_readout;  // node states after message passing (d x N)
    Mat h_w;          // exogenous embedding (d_w x 1), when computed
  };

  static Model build(const ModelConfig& cfg, const HeteroTemporalGraph& base) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    m.base_graph = base;
    m.n_l = base.count(graph::NodeKind::Low);
    m.n_h = base.count(graph::NodeKind::High);
    const int channels = m.n_l + m.n_h + cfg.n_w;
    const itx::InteractionConfig icfg = cfg.interaction_config();

    switch (cfg.variant) {
      case Variant::HTGNN:
      case Variant::HTGNN_wo_EXO: {
        const bool exo_into_enc = cfg.variant == Variant::HTGNN;
        m.graph = base;
        enc::register_exogenous(m.params, "exo", cfg.n_w, cfg.d_w);
        if (m.n_l > 0)
          enc::register_low_freq(m.params, "low", cfg.d_w, cfg.d, exo_into_enc);
        enc::register_high_freq(m.params, "high", cfg.high_spec(), cfg.d_w,
                                exo_into_enc ? enc::GateMode::FromContext
                                             : enc::GateMode::BiasOnly);
        itx::register_interaction(m.params, "mp", m.graph, icfg);
        m.register_graph_readout(
            2 * cfg.lstm_hidden + (exo_into_enc ? 0 : cfg.d_w));
        break;
      }
      case Variant::CNN_GCN_vib:
      case Variant::GRU_GCN_vib: {
        m.graph = detail::high_subgraph(base);
        if (m.graph.n_nodes() == 0)
          throw EmptyTypePartition("vibration-only variant needs H nodes");
        enc::register_exogenous(m.params, "exo", cfg.n_w, cfg.d_w);
        if (cfg.variant == Variant::CNN_GCN_vib)
          enc::register_high_freq(m.params, "high", cfg.high_spec(), cfg.d_w);
        else
          enc::register_low_freq(m.params, "enc", cfg.d_w, cfg.d, true);
        itx::register_interaction(m.params, "mp", m.graph, icfg);
        m.register_graph_readout(2 * cfg.lstm_hidden);
        break;
      }
      case Variant::GRU_GAT_homog:
      case Variant::GRU_GCN_homog:
      case Variant::CNN_GCN_homog: {
        m.graph = detail::complete_homog_graph(channels);
        if (cfg.variant == Variant::CNN_GCN_homog)
          enc::register_high_freq(m.params, "enc", cfg.high_spec(), cfg.d_w,
                                  enc::GateMode::BiasOnly);
        else
          enc::register_low_freq(m.params, "enc", cfg.d_w, cfg.d, false);
        itx::register_interaction(m.params, "mp", m.graph, icfg);
        m.register_graph_readout(2 * cfg.lstm_hidden);
        break;
      }
      case Variant::BiLSTM:
        detail::register_bilstm(m.params, "lstm", channels, cfg.lstm_hidden);
        detail::register_head(m.params, "head", 2 * cfg.lstm_hidden,
                              cfg.head_hidden, cfg.d_y);
        break;
      case Variant::CNN1D:
      case Variant::GCNN1D: {
        const bool gated = cfg.variant == Variant::GCNN1D;
        const int c_in = gated ? m.n_l + m.n_h : channels;
        std::vector<int> ch = {c_in, 32, 32, 1};
        if (gated) enc::register_exogenous(m.params, "exo", cfg.n_w, cfg.d_w);
        detail::register_conv_stack(m.params, "conv", ch, 3, cfg.d_w,
                                    gated ? enc::GateMode::FromContext
                                          : enc::GateMode::ForcedOne);
        m.params.add("conv/R", cfg.d_graph, cfg.window, cfg.window);
        detail::register_head(m.params, "head", cfg.d_graph, cfg.head_hidden,
                              cfg.d_y);
        break;
      }
      case Variant::MTGAT: {
        m.graph = detail::complete_homog_graph(channels);
        detail::register_conv_stack(m.params, "enc", {1, 4, 1}, 3, cfg.d_w,
                                    enc::GateMode::ForcedOne);
        m.params.add("enc/R", cfg.d, cfg.window, cfg.window);
        itx::InteractionConfig one = icfg;
        one.layers = 1;
        itx::register_interaction(m.params, "mp", m.graph, one);
        detail::register_gru_seq(m.params, "gru", cfg.d, cfg.lstm_hidden);
        detail::register_head(m.params, "head", cfg.lstm_hidden,
                              cfg.head_hidden, cfg.d_y);
        break;
      }
    }
    if (m.graph.n_nodes() > 0) m.deg = graph::degree_table(m.graph);
    return m;
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    params.init_uniform(rng);
  }

  // Normalized-space prediction (d_y x 1). The sample must already be
  // normalized when the normalizer is fitted (train/predict handle this).
  Var forward(Tape& tape, const ParamVars& pv, const SensorWindow& s,
              bool training = false, std::mt19937_64* rng = nullptr,
              Trace* trace = nullptr) const {
    check_sample(s);
    switch (cfg.variant) {
      case Variant::HTGNN:
      case Variant::HTGNN_wo_EXO:
      case Variant::CNN_GCN_vib:
      case Variant::GRU_GCN_vib:
        return forward_gnn(tape, pv, s, training, rng, trace);
      case Variant::GRU_GAT_homog:
      case Variant::GRU_GCN_homog:
      case Variant::CNN_GCN_homog:
        return forward_homog(tape, pv, s, training, rng, trace);
      case Variant::BiLSTM: {
        Var seq = ad::leaf(tape, detail::stacked_channels(s, true));
        Var z = detail::run_bilstm(tape, pv, "lstm", seq, cfg.lstm_hidden);
        return detail::run_head(tape, pv, "head", z, training, rng, cfg.dropout);
      }
      case Variant::CNN1D:
      case Variant::GCNN1D: {
        const bool gated = cfg.variant == Variant::GCNN1D;
        Var h_w;
        if (gated)
          h_w = enc::encode_exogenous(tape, ad::leaf(tape, s.w), pv, "exo");
        Var x = ad::leaf(tape, detail::stacked_channels(s, !gated));
        const int c_in = static_cast<int>(x.value().rows());
        Var o = detail::run_conv_stack(tape, x, h_w, pv, "conv",
                                       {c_in, 32, 32, 1}, 3, 1,
                                       gated ? enc::GateMode::FromContext
                                             : enc::GateMode::ForcedOne);
        Var f = ad::matmul(pv["conv/R"], ad::transpose(o));
        if (trace && h_w.valid()) trace->h_w = h_w.value();
        return detail::run_head(tape, pv, "head", f, training, rng, cfg.dropout);
      }
      case Variant::MTGAT: {
        Mat chan = detail::stacked_channels(s, true);
        std::vector<Var> feats;
        for (Eigen::Index c = 0; c < chan.rows(); ++c) {
          Var row = ad::leaf(tape, chan.row(c));
          Var o = detail::run_conv_stack(tape, row, Var{}, pv, "enc",
                                         {1, 4, 1}, 3, 1,
                                         enc::GateMode::ForcedOne);
          feats.push_back(ad::matmul(pv["enc/R"], ad::transpose(o)));
        }
        Var states = ad::concat_cols(feats);
        itx::InteractionConfig one = cfg.interaction_config();
        one.layers = 1;
        states = itx::hetero_layer(tape, graph, states, pv, "mp", 0, deg, one);
        if (trace) trace->pre_readout = states.value();
        Var z = detail::run_gru_seq(tape, pv, "gru", states, cfg.lstm_hidden);
        return detail::run_head(tape, pv, "head", z, training, rng, cfg.dropout);
      }
    }
    throw InvalidVariant("unreachable variant");
  }

  // Convenience single-sample inference: normalizes inputs, runs the forward
  // pass in evaluation mode, and denormalizes the prediction.
  Eigen::VectorXd predict(const SensorWindow& s) const {
    Tape tape;
    ParamVars pv = ParamVars::push_all(tape, params);
    SensorWindow ns = norm.apply(s);
    Var out = forward(tape, pv, ns);
    return norm.denorm_y(out.value().col(0));
  }

 private:
  void register_graph_readout(int head_in) {
    params.add("readout/proj/W", cfg.d_graph, cfg.d, cfg.d);
    params.add("readout/proj/b", cfg.d_graph, 1, 0);
    detail::register_bilstm(params, "readout/lstm", cfg.d_graph,
                            cfg.lstm_hidden);
    detail::register_head(params, "head", head_in, cfg.head_hidden, cfg.d_y);
  }

  void check_sample(const SensorWindow& s) const {
    const Eigen::Index L = cfg.window;
    if (s.x_l.rows() != n_l || s.x_h.rows() != n_h || s.w.rows() != cfg.n_w)
      throw ShapeMismatch("sample channel counts do not match the graph");
    for (const Mat* m : {&s.x_l, &s.x_h, &s.w}) {
      if (m->rows() > 0 && m->cols() != L)
        throw ShapeMismatch("sample window length does not match the config");
      if (!m->allFinite()) throw NonFiniteInput("sample contains non-finite values");
    }
  }

  Var readout(Tape& tape, const ParamVars& pv, Var states, Var extra,
              bool training, std::mt19937_64* rng) const {
    Var seq = ad::add_col_broadcast(ad::matmul(pv["readout/proj/W"], states),
                                    pv["readout/proj/b"]);
    Var z = detail::run_bilstm(tape, pv, "readout/lstm", seq, cfg.lstm_hidden);
    if (extra.valid()) z = ad::concat_rows({z, extra});
    return detail::run_head(tape, pv, "head", z, training, rng, cfg.dropout);
  }

  Var forward_gnn(Tape& tape, const ParamVars& pv, const SensorWindow& s,
                  bool training, std::mt19937_64* rng, Trace* trace) const {
    const bool wo_exo = cfg.variant == Variant::HTGNN_wo_EXO;
    const bool vib = cfg.variant == Variant::CNN_GCN_vib ||
                     cfg.variant == Variant::GRU_GCN_vib;
    Var h_w = enc::encode_exogenous(tape, ad::leaf(tape, s.w), pv, "exo");
    Var enc_ctx = wo_exo ? Var{} : h_w;

    std::vector<Var> cols;
    if (!vib && n_l > 0) {
      Var low = enc::encode_low_freq(tape, ad::leaf(tape, s.x_l), enc_ctx, pv,
                                     "low", cfg.d, cfg.silu_in_gru);
      cols.push_back(low);
    }
    if (vib && cfg.variant == Variant::GRU_GCN_vib) {
      cols.push_back(enc::encode_low_freq(tape, ad::leaf(tape, s.x_h), enc_ctx,
                                          pv, "enc", cfg.d, cfg.silu_in_gru));
    } else {
      const enc::HighFreqSpec spec = cfg.high_spec();
      const enc::GateMode mode =
          wo_exo ? enc::GateMode::BiasOnly : enc::GateMode::FromContext;
      std::vector<Var> hi;
      for (Eigen::Index r = 0; r < s.x_h.rows(); ++r)
        hi.push_back(enc::encode_high_freq(tape, ad::leaf(tape, s.x_h.row(r)),
                                           enc_ctx, pv, "high", spec, mode));
      if (!hi.empty()) cols.push_back(ad::concat_cols(hi));
    }
    Var states = cols.size() == 1 ? cols[0] : ad::concat_cols(cols);

    const itx::InteractionConfig icfg = cfg.interaction_config();
    for (int l = 0; l < icfg.layers; ++l)
      states = itx::hetero_layer(tape, graph, states, pv, "mp", l, deg, icfg);

    if (trace) {
      trace->pre_readout = states.value();
      trace->h_w = h_w.value();
    }
    return readout(tape, pv, states, wo_exo ? h_w : Var{}, training, rng);
  }

  Var forward_homog(Tape& tape, const ParamVars& pv, const SensorWindow& s,
                    bool training, std::mt19937_64* rng, Trace* trace) const {
    Mat chan = detail::stacked_channels(s, true);
    Var states;
    if (cfg.variant == Variant::CNN_GCN_homog) {
      const enc::HighFreqSpec spec = cfg.high_spec();
      std::vector<Var> cols;
      for (Eigen::Index c = 0; c < chan.rows(); ++c)
        cols.push_back(enc::encode_high_freq(tape, ad::leaf(tape, chan.row(c)),
                                             Var{}, pv, "enc", spec,
                                             enc::GateMode::BiasOnly));
      states = ad::concat_cols(cols);
    } else {
      states = enc::encode_low_freq(tape, ad::leaf(tape, chan), Var{}, pv,
                                    "enc", cfg.d, cfg.silu_in_gru);
    }
    const itx::InteractionConfig icfg = cfg.interaction_config();
    for (int l = 0; l < icfg.layers; ++l)
      states = itx::hetero_layer(tape, graph, states, pv, "mp", l, deg, icfg);
    if (trace) trace->pre_readout = states.value();
    return readout(tape, pv, states, Var{}, training, rng);
  }
};

// ---- checkpoints ----------------------------------------------------------------

// Manifest JSON (config, graph, normalizer, parameter shapes) next to a blob
// of little-endian floats concatenated row-major in manifest order.
inline void save_checkpoint(const Model& m, const std::string& json_path,
                            bool float32 = false) {
  namespace fs = std::filesystem;
  fs::path jp(json_path);
  fs::path bp = jp;
  bp.replace_extension(".bin");

  json params = json::array();
  for (int k = 0; k < m.params.count(); ++k)
    params.push_back({{"name", m.params.name(k)},
                      {"rows", m.params.value(k).rows()},
                      {"cols", m.params.value(k).cols()}});
  json manifest{{"config", m.cfg.to_json()},
                {"graph", m.base_graph.to_json()},
                {"normalizer", m.norm.fitted() ? m.norm.to_json() : json()},
                {"dtype", float32 ? "float32" : "float64"},
                {"blob", bp.filename().string()},
                {"params", std::move(params)}};

  std::ofstream jf(jp);
  if (!jf) throw IoError("cannot write " + jp.string());
  jf << manifest.dump(2) << "\n";

  std::ofstream bf(bp, std::ios::binary);
  if (!bf) throw IoError("cannot write " + bp.string());
  for (int k = 0; k < m.params.count(); ++k) {
    const Mat& v = m.params.value(k);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        if (float32) {
          const float f = static_cast<float>(v(i, j));
          bf.write(reinterpret_cast<const char*>(&f), sizeof(f));
        } else {
          const double d = v(i, j);
          bf.write(reinterpret_cast<const char*>(&d), sizeof(d));
        }
      }
  }
}

inline Model load_checkpoint(const std::string& json_path) {
  namespace fs = std::filesystem;
  std::ifstream jf(json_path);
  if (!jf) throw IoError("cannot read " + json_path);
  json manifest = json::parse(jf);

  const ModelConfig cfg = ModelConfig::from_json(manifest.at("config"));
  const HeteroTemporalGraph base =
      HeteroTemporalGraph::from_json(manifest.at("graph"),
                                     /*enforce=*/false);
  Model m = Model::build(cfg, base);
  if (!manifest.at("normalizer").is_null())
    m.norm = Normalizer::from_json(manifest.at("normalizer"));

  const bool float32 = manifest.at("dtype").get<std::string>() == "float32";
  fs::path bp = fs::path(json_path).parent_path() /
                manifest.at("blob").get<std::string>();
  std::ifstream bf(bp, std::ios::binary);
  if (!bf) throw IoError("cannot read " + bp.string());

  const json& plist = manifest.at("params");
  if (static_cast<int>(plist.size()) != m.params.count())
    throw ShapeMismatch("checkpoint parameter list does not match the model");
  for (int k = 0; k < m.params.count(); ++k) {
    const json& p = plist[k];
    Mat& v = m.params.value(k);
    if (p.at("name").get<std::string>() != m.params.name(k) ||
        p.at("rows").get<Eigen::Index>() != v.rows() ||
        p.at("cols").get<Eigen::Index>() != v.cols())
      throw ShapeMismatch("checkpoint shape mismatch at " + m.params.name(k));
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        if (float32) {
          float f;
          bf.read(reinterpret_cast<char*>(&f), sizeof(f));
          v(i, j) = static_cast<double>(f);
        } else {
          bf.read(reinterpret_cast<char*>(&v(i, j)), sizeof(double));
        }
      }
  }
  if (!bf) throw IoError("checkpoint blob truncated: " + bp.string());
  return m;
}

// Small heterogeneous test graph: a chain of 4 L nodes, a pair of H nodes,
// and full bipartite cross-type relations.
inline HeteroTemporalGraph toy_graph() {
  std::vector<graph::NodeSpec> specs;
  for (int k = 0; k < 4; ++k)
    specs.push_back({graph::NodeKind::Low, "D", k, ""});
  for (int k = 0; k < 2; ++k)
    specs.push_back({graph::NodeKind::High, "A", k, ""});
  std::vector<graph::EdgeRule> rules = {
      {graph::RelationId::LL, graph::EdgeRule::Kind::Chain, "", "", {}},
      {graph::RelationId::HH, graph::EdgeRule::Kind::Chain, "", "", {}},
      {graph::RelationId::LH, graph::EdgeRule::Kind::BipartiteFull, "", "", {}},
      {graph::RelationId::HL, graph::EdgeRule::Kind::BipartiteFull, "", "", {}},
  };
  return graph::build_graph(specs, rules);
}

// Shrunken configuration matching toy_graph and a 12-step window; the conv
// stacks are reduced so their receptive fields fit the short window.
inline ModelConfig toy_config(Variant v = Variant::HTGNN) {
  ModelConfig c;
  c.variant = v;
  c.d_w = 3;
  c.d = 6;
  c.d_graph = 8;
  c.lstm_hidden = 8;
  c.head_hidden = 8;
  c.window = 12;
  c.d_y = 2;
  c.small_kernel = 3;
  c.small_dilation = 1;
  c.small_channels = {1, 3, 1};
  c.large_kernel = 3;
  c.large_dilation = 2;
  c.large_channels = {1, 3, 1};
  return c;
}

}  // namespace htgnn::model
