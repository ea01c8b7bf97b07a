#include "herdid/embednet.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "herdid/error.hpp"
#include "herdid/parallel.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace herdid {

void NetworkSpec::validate() const {
  if (point_mlp_channels.empty())
    fail(Err::ShapeMismatch, "network needs at least one point MLP layer");
  for (int w : point_mlp_channels)
    if (w < 1) fail(Err::ShapeMismatch, "point MLP widths must be >= 1");
  for (int w : head_widths)
    if (w < 1) fail(Err::ShapeMismatch, "head widths must be >= 1");
  if (embedding_dim < 1) fail(Err::ShapeMismatch, "embedding_dim must be >= 1");
  if (class_count < 0) fail(Err::ShapeMismatch, "class_count must be >= 0");
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer* l : layer_list(*this))
    n += static_cast<std::size_t>(l->weight.size() + l->bias.size());
  return n;
}

std::vector<DenseLayer*> layer_list(NetworkParams& p) {
  std::vector<DenseLayer*> out;
  for (auto& l : p.point_mlp) out.push_back(&l);
  for (auto& l : p.head) out.push_back(&l);
  out.push_back(&p.embed);
  out.push_back(&p.classifier);
  return out;
}

std::vector<const DenseLayer*> layer_list(const NetworkParams& p) {
  std::vector<const DenseLayer*> out;
  for (auto& l : p.point_mlp) out.push_back(&l);
  for (auto& l : p.head) out.push_back(&l);
  out.push_back(&p.embed);
  out.push_back(&p.classifier);
  return out;
}

std::vector<std::string> layer_names(const NetworkSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec.point_mlp_channels.size(); ++i)
    names.push_back("point_mlp[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < spec.head_widths.size(); ++i)
    names.push_back("head[" + std::to_string(i) + "]");
  names.push_back("embed");
  names.push_back("classifier");
  return names;
}

namespace {

DenseLayer make_layer(int in, int out) {
  DenseLayer l;
  l.weight = Eigen::MatrixXd::Zero(in, out);
  l.bias = Eigen::VectorXd::Zero(out);
  return l;
}

void init_layer(DenseLayer& l, Rng& rng, double gain) {
  const double scale = gain / std::sqrt(static_cast<double>(l.weight.rows()));
  for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
    for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
      l.weight(i, j) = rng.uniform(-scale, scale);
  l.bias.setZero();
}

NetworkParams make_params(const NetworkSpec& spec) {
  spec.validate();
  NetworkParams p;
  p.spec = spec;
  int in = 3;
  for (int width : spec.point_mlp_channels) {
    p.point_mlp.push_back(make_layer(in, width));
    in = width;
  }
  for (int width : spec.head_widths) {
    p.head.push_back(make_layer(in, width));
    in = width;
  }
  p.embed = make_layer(in, spec.embedding_dim);
  p.classifier = make_layer(spec.embedding_dim, spec.class_count);
  return p;
}

void check_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
  if (!m.allFinite())
    fail(Err::NonFinite, std::string("non-finite values after layer ") + what);
}

}  // namespace

NetworkParams init_network(const NetworkSpec& spec, Rng& rng) {
  NetworkParams p = make_params(spec);
  for (DenseLayer* l : layer_list(p)) init_layer(*l, rng, spec.init_gain);
  return p;
}

void forward(const NetworkParams& params, const PointCloud& cloud, ForwardTrace& trace) {
  const Eigen::Index n = cloud.size();
  if (n < 1) fail(Err::EmptyCloud, "forward needs at least one point");

  trace.input = cloud.points.transpose();
  trace.point_pre.resize(params.point_mlp.size());

  // shared MLP over points: X <- relu(X W + 1 b^T)
  Eigen::MatrixXd x = trace.input;
  for (std::size_t l = 0; l < params.point_mlp.size(); ++l) {
    const DenseLayer& layer = params.point_mlp[l];
    trace.point_pre[l].noalias() = x * layer.weight;
    trace.point_pre[l].rowwise() += layer.bias.transpose();
    check_finite(trace.point_pre[l], ("point_mlp[" + std::to_string(l) + "]").c_str());
    x = trace.point_pre[l].cwiseMax(0.0);
  }

  // channel-wise max over points; ties keep the lowest point index
  const Eigen::Index channels = x.cols();
  trace.pool_argmax.assign(static_cast<std::size_t>(channels), 0);
  trace.global_feature.resize(channels);
  for (Eigen::Index c = 0; c < channels; ++c) {
    Eigen::Index best = 0;
    double best_v = x(0, c);
    for (Eigen::Index i = 1; i < n; ++i) {
      if (x(i, c) > best_v) {
        best_v = x(i, c);
        best = i;
      }
    }
    trace.pool_argmax[static_cast<std::size_t>(c)] = best;
    trace.global_feature[c] = best_v;
  }

  trace.head_pre.resize(params.head.size());
  Eigen::VectorXd h = trace.global_feature;
  for (std::size_t l = 0; l < params.head.size(); ++l) {
    const DenseLayer& layer = params.head[l];
    trace.head_pre[l].noalias() = layer.weight.transpose() * h;
    trace.head_pre[l] += layer.bias;
    check_finite(trace.head_pre[l], ("head[" + std::to_string(l) + "]").c_str());
    h = trace.head_pre[l].cwiseMax(0.0);
  }

  trace.embedding_pre.noalias() = params.embed.weight.transpose() * h;
  trace.embedding_pre += params.embed.bias;
  check_finite(trace.embedding_pre, "embed");

  if (params.spec.normalize_embeddings) {
    trace.embedding_norm = trace.embedding_pre.norm();
    if (!(trace.embedding_norm > 0.0))
      fail(Err::NonFinite, "embedding norm vanished; cannot normalize");
    trace.embedding = trace.embedding_pre / trace.embedding_norm;
  } else {
    trace.embedding_norm = 1.0;
    trace.embedding = trace.embedding_pre;
  }

  trace.logits.noalias() = params.classifier.weight.transpose() * trace.embedding;
  trace.logits += params.classifier.bias;
  if (params.spec.class_count > 0) check_finite(trace.logits, "classifier");
}

Gradients zero_gradients(const NetworkSpec& spec) {
  NetworkParams p = make_params(spec);
  Gradients g;
  g.point_mlp = std::move(p.point_mlp);
  g.head = std::move(p.head);
  g.embed = std::move(p.embed);
  g.classifier = std::move(p.classifier);
  g.input.resize(3, 0);
  return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
  auto add = [scale](DenseLayer& a, const DenseLayer& b) {
    a.weight += scale * b.weight;
    a.bias += scale * b.bias;
  };
  for (std::size_t i = 0; i < point_mlp.size(); ++i) add(point_mlp[i], other.point_mlp[i]);
  for (std::size_t i = 0; i < head.size(); ++i) add(head[i], other.head[i]);
  add(embed, other.embed);
  add(classifier, other.classifier);
}

void backward(const NetworkParams& params, const ForwardTrace& trace,
              const Eigen::VectorXd& d_embedding, const Eigen::VectorXd& d_logits,
              Gradients& out, bool want_input_gradient) {
  if (trace.point_pre.size() != params.point_mlp.size() ||
      trace.head_pre.size() != params.head.size() ||
      trace.embedding_pre.size() != params.spec.embedding_dim ||
      trace.logits.size() != params.spec.class_count)
    fail(Err::ShapeMismatch, "trace does not match network parameters");
  if (d_embedding.size() != params.spec.embedding_dim ||
      d_logits.size() != params.spec.class_count)
    fail(Err::ShapeMismatch, "upstream gradient dimensions do not match");

  // classifier: logits = W^T e + b
  Eigen::VectorXd de = d_embedding;
  if (params.spec.class_count > 0) {
    out.classifier.weight.noalias() += trace.embedding * d_logits.transpose();
    out.classifier.bias += d_logits;
    de.noalias() += params.classifier.weight * d_logits;
  }

  // normalization: e = u / |u|
  Eigen::VectorXd du;
  if (params.spec.normalize_embeddings) {
    du = (de - trace.embedding * trace.embedding.dot(de)) / trace.embedding_norm;
  } else {
    du = de;
  }

  // embed layer input is the last head activation (or the global feature)
  const Eigen::Index n = trace.input.rows();
  Eigen::VectorXd h_last = params.head.empty()
                               ? trace.global_feature
                               : trace.head_pre.back().cwiseMax(0.0).eval();
  out.embed.weight.noalias() += h_last * du.transpose();
  out.embed.bias += du;
  Eigen::VectorXd dh = params.embed.weight * du;

  for (std::size_t l = params.head.size(); l-- > 0;) {
    const Eigen::VectorXd dpre = (trace.head_pre[l].array() > 0.0).select(dh, 0.0);
    const Eigen::VectorXd h_prev =
        l == 0 ? trace.global_feature : trace.head_pre[l - 1].cwiseMax(0.0).eval();
    out.head[l].weight.noalias() += h_prev * dpre.transpose();
    out.head[l].bias += dpre;
    dh = params.head[l].weight * dpre;
  }

  // un-pool: route each channel's gradient to its winning point
  const Eigen::Index channels = trace.global_feature.size();
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, channels);
  for (Eigen::Index c = 0; c < channels; ++c)
    dx(trace.pool_argmax[static_cast<std::size_t>(c)], c) = dh[c];

  for (std::size_t l = params.point_mlp.size(); l-- > 0;) {
    const Eigen::MatrixXd dpre = (trace.point_pre[l].array() > 0.0).select(dx, 0.0);
    if (l == 0) {
      out.point_mlp[l].weight.noalias() += trace.input.transpose() * dpre;
    } else {
      out.point_mlp[l].weight.noalias() +=
          trace.point_pre[l - 1].cwiseMax(0.0).transpose() * dpre;
    }
    out.point_mlp[l].bias += dpre.colwise().sum().transpose();
    if (l > 0 || want_input_gradient)
      dx = dpre * params.point_mlp[l].weight.transpose();
  }

  if (want_input_gradient) out.input = dx.transpose();
}

std::vector<Eigen::VectorXd> embed_batch(const NetworkParams& params,
                                         const std::vector<PointCloud>& clouds,
                                         int jobs) {
  std::vector<Eigen::VectorXd> out(clouds.size());
  parallel_for(clouds.size(), jobs, [&](std::size_t i) {
    ForwardTrace trace;
    forward(params, clouds[i], trace);
    out[i] = std::move(trace.embedding);
  });
  return out;
}

void save_checkpoint(const NetworkParams& params, int epoch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Err::UnwritablePath, "cannot write checkpoint: " + path);

  const NetworkSpec& s = params.spec;
  out << "herdid-ckpt v1\n";
  out << "point_mlp";
  for (int w : s.point_mlp_channels) out << ' ' << w;
  out << "\nhead";
  for (int w : s.head_widths) out << ' ' << w;
  out << "\nembedding_dim " << s.embedding_dim << '\n';
  out << "class_count " << s.class_count << '\n';
  out << "normalize_embeddings " << (s.normalize_embeddings ? 1 : 0) << '\n';
  out << "init_seed " << s.init_seed << '\n';
  out << "epoch " << epoch << '\n';
  out << "params " << params.parameter_count() << '\n';

  // flat float64 array, canonical layer order, weights row-major then bias
  for (const DenseLayer* l : layer_list(params)) {
    for (Eigen::Index i = 0; i < l->weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l->weight.cols(); ++j) {
        const double v = l->weight(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    for (Eigen::Index j = 0; j < l->bias.size(); ++j) {
      const double v = l->bias[j];
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!out) fail(Err::UnwritablePath, "short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::MissingFile, "checkpoint not found: " + path);

  std::string line;
  if (!std::getline(in, line) || line != "herdid-ckpt v1")
    fail(Err::ParseError, path + ": not a herdid checkpoint");

  NetworkSpec spec;
  spec.point_mlp_channels.clear();
  spec.head_widths.clear();
  int epoch = 0;
  std::size_t declared = 0;
  for (;;) {
    if (!std::getline(in, line)) fail(Err::ParseError, path + ": truncated header");
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "point_mlp") {
      int w;
      while (ls >> w) spec.point_mlp_channels.push_back(w);
    } else if (key == "head") {
      int w;
      while (ls >> w) spec.head_widths.push_back(w);
    } else if (key == "embedding_dim") {
      ls >> spec.embedding_dim;
    } else if (key == "class_count") {
      ls >> spec.class_count;
    } else if (key == "normalize_embeddings") {
      int b = 1;
      ls >> b;
      spec.normalize_embeddings = b != 0;
    } else if (key == "init_seed") {
      ls >> spec.init_seed;
    } else if (key == "epoch") {
      ls >> epoch;
    } else if (key == "params") {
      ls >> declared;
      break;
    } else {
      fail(Err::ParseError, path + ": unknown header key " + key);
    }
  }

  Checkpoint ckpt;
  ckpt.params = make_params(spec);
  ckpt.epoch = epoch;
  if (declared != ckpt.params.parameter_count())
    fail(Err::ShapeMismatch, path + ": parameter count does not match spec");

  for (DenseLayer* l : layer_list(ckpt.params)) {
    for (Eigen::Index i = 0; i < l->weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l->weight.cols(); ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        l->weight(i, j) = v;
      }
    for (Eigen::Index j = 0; j < l->bias.size(); ++j) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof v);
      l->bias[j] = v;
    }
  }
  if (!in) fail(Err::ParseError, path + ": truncated parameter array");
  return ckpt;
}

}  // namespace herdid
