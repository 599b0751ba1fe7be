#include "swpc/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json_io.hpp"
#include "swpc/error.hpp"

namespace swpc {

namespace {

enum ThetaIndex : std::size_t {
  kConv1 = 0,
  kBn1Gamma,
  kBn1Beta,
  kSpatial,
  kBn2Gamma,
  kBn2Beta,
  kSepDepthwise,
  kSepPointwise,
  kBn3Gamma,
  kBn3Beta,
  kThetaCount
};

enum PsiIndex : std::size_t { kDenseWeight = 0, kDenseBias, kPsiCount };

constexpr std::size_t kInferenceChunk = 64;

std::vector<Shape> theta_shapes(const NetConfig& c) {
  const std::size_t K = c.resolved_temporal_kernel();
  const std::size_t Ks = c.resolved_separable_kernel();
  return {{c.f1, 1, K}, {c.f1},   {c.f1},           {c.f1 * c.depth, c.n_channels, 1},
          {c.f2},       {c.f2},   {c.f2, 1, Ks},    {c.f2, c.f2},
          {c.f2},       {c.f2}};
}

std::vector<Shape> psi_shapes(const NetConfig& c) { return {{c.n_classes, c.embedding_dim()}, {c.n_classes}}; }

Tensor glorot(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

std::vector<ad::BatchNormState> fresh_batchnorm(const NetConfig& c) {
  auto make = [](std::size_t n) { return ad::BatchNormState{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; };
  return {make(c.f1), make(c.f2), make(c.f2)};
}

}  // namespace

std::size_t NetConfig::resolved_temporal_kernel() const {
  std::size_t k = temporal_kernel;
  if (k == 0) k = static_cast<std::size_t>(std::llround(fs / 2.0));
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(1, input_len / 2));
}

std::size_t NetConfig::resolved_separable_kernel() const {
  return std::clamp<std::size_t>(separable_kernel, 1, std::max<std::size_t>(1, input_len / pool1));
}

void NetConfig::validate() const {
  if (n_channels == 0) throw InvalidArgument("network needs at least one channel");
  if (f1 == 0 || depth == 0) throw InvalidArgument("f1 and depth must be positive");
  if (f2 != f1 * depth) {
    throw InvalidArgument("f2 (" + std::to_string(f2) + ") must equal f1 * depth (" + std::to_string(f1 * depth) + ")");
  }
  if (pool1 == 0 || pool2 == 0) throw InvalidArgument("pooling factors must be positive");
  if (pooled_len() == 0) {
    throw InvalidArgument("input length " + std::to_string(input_len) + " is shorter than the pooling factor " +
                          std::to_string(pool1 * pool2));
  }
  if (n_classes < 2) throw InvalidArgument("classifier needs at least two classes");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("dropout must be in [0, 1)");
  if (!(fs > 0.0)) throw InvalidArgument("sampling rate must be positive");
}

const std::vector<std::string>& theta_names() {
  static const std::vector<std::string> names{"conv1.weight",     "bn1.gamma",         "bn1.beta",
                                              "spatial.weight",   "bn2.gamma",         "bn2.beta",
                                              "separable.depthwise", "separable.pointwise", "bn3.gamma",
                                              "bn3.beta"};
  return names;
}

const std::vector<std::string>& psi_names() {
  static const std::vector<std::string> names{"head.weight", "head.bias"};
  return names;
}

ModelBundle init_model(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const auto shapes = theta_shapes(config);
  const std::size_t K = config.resolved_temporal_kernel();
  const std::size_t Ks = config.resolved_separable_kernel();

  ModelBundle b;
  b.config = config;
  b.theta.resize(kThetaCount);
  b.theta[kConv1] = glorot(shapes[kConv1], K, config.f1 * K, rng);
  b.theta[kSpatial] = glorot(shapes[kSpatial], config.n_channels, config.depth * config.n_channels, rng);
  b.theta[kSepDepthwise] = glorot(shapes[kSepDepthwise], Ks, Ks, rng);
  b.theta[kSepPointwise] = glorot(shapes[kSepPointwise], config.f2, config.f2, rng);
  for (std::size_t i : {kBn1Gamma, kBn2Gamma, kBn3Gamma}) b.theta[i] = Tensor(shapes[i], 1.0);
  for (std::size_t i : {kBn1Beta, kBn2Beta, kBn3Beta}) b.theta[i] = Tensor(shapes[i], 0.0);

  const auto head = psi_shapes(config);
  b.psi.push_back(glorot(head[kDenseWeight], config.embedding_dim(), config.n_classes, rng));
  b.psi.emplace_back(head[kDenseBias], 0.0);
  b.batchnorm = fresh_batchnorm(config);
  return b;
}

Tensor stack_batch(std::span<const Matrix* const> windows, const NetConfig& config) {
  const std::size_t ch = config.n_channels, T = config.input_len;
  Tensor out({windows.size(), 1, ch, T});
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const Matrix& w = *windows[b];
    if (w.rows() != ch || w.cols() != T) {
      throw ShapeError("window is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                       ", network expects " + std::to_string(ch) + "x" + std::to_string(T));
    }
    std::copy(w.data().begin(), w.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * ch * T));
  }
  return out;
}

Tensor stack_batch(std::span<const Matrix> windows, const NetConfig& config) {
  std::vector<const Matrix*> ptrs;
  ptrs.reserve(windows.size());
  for (const Matrix& m : windows) ptrs.push_back(&m);
  return stack_batch(std::span<const Matrix* const>(ptrs), config);
}

std::vector<ad::Var> bind_params(ad::Tape& tape, const std::vector<Tensor>& params, bool trainable) {
  std::vector<ad::Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(trainable ? tape.parameter(p) : tape.constant(p));
  return vars;
}

ad::Var feature_extract(ad::Tape& tape, const NetConfig& config, std::span<const ad::Var> theta,
                        std::vector<ad::BatchNormState>& bn_state, ad::Var input, ForwardMode mode) {
  if (theta.size() != kThetaCount) throw ShapeError("feature extractor expects " + std::to_string(kThetaCount) + " tensors");
  if (bn_state.size() != 3) throw ShapeError("feature extractor expects three batchnorm states");
  const Tensor& x = tape.value(input);
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != config.n_channels || x.dim(3) != config.input_len) {
    throw ShapeError("feature extractor input " + shape_string(x.shape()) + " does not match [B, 1, " +
                     std::to_string(config.n_channels) + ", " + std::to_string(config.input_len) + "]");
  }
  using namespace ad;
  Var h = conv2d_temporal(tape, input, theta[kConv1]);
  h = batchnorm(tape, h, theta[kBn1Gamma], theta[kBn1Beta], bn_state[0], mode.batchnorm);
  h = conv2d_depthwise(tape, h, theta[kSpatial], config.depth);
  h = batchnorm(tape, h, theta[kBn2Gamma], theta[kBn2Beta], bn_state[1], mode.batchnorm);
  h = elu(tape, h);
  h = avgpool_time(tape, h, config.pool1);
  h = dropout(tape, h, config.dropout, mode.dropout_rng);
  h = conv2d_depthwise(tape, h, theta[kSepDepthwise], 1);
  h = conv2d_pointwise(tape, h, theta[kSepPointwise]);
  h = batchnorm(tape, h, theta[kBn3Gamma], theta[kBn3Beta], bn_state[2], mode.batchnorm);
  h = elu(tape, h);
  h = avgpool_time(tape, h, config.pool2);
  h = dropout(tape, h, config.dropout, mode.dropout_rng);
  return flatten(tape, h);
}

ad::Var classify_logits(ad::Tape& tape, std::span<const ad::Var> psi, ad::Var embeddings) {
  if (psi.size() != kPsiCount) throw ShapeError("classifier head expects weight and bias");
  return ad::dense(tape, embeddings, psi[kDenseWeight], psi[kDenseBias]);
}

Tensor embed(const ModelBundle& bundle, std::span<const Matrix> windows) {
  const NetConfig& c = bundle.config;
  Tensor out({windows.size(), c.embedding_dim()});
  auto bn = bundle.batchnorm;  // eval mode never writes, the copy keeps this const
  for (std::size_t begin = 0; begin < windows.size(); begin += kInferenceChunk) {
    const std::size_t n = std::min(kInferenceChunk, windows.size() - begin);
    ad::Tape tape;
    const auto theta = bind_params(tape, bundle.theta, false);
    const ad::Var x = tape.constant(stack_batch(windows.subspan(begin, n), c));
    const ad::Var e = feature_extract(tape, c, theta, bn, x, ForwardMode::eval());
    const Tensor& ev = tape.value(e);
    std::copy(ev.data().begin(), ev.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(begin * c.embedding_dim()));
  }
  return out;
}

Tensor classify(std::span<const Tensor> psi, const Tensor& embeddings) {
  if (psi.size() != kPsiCount) throw ShapeError("classifier head expects weight and bias");
  ad::Tape tape;
  const ad::Var w = tape.constant(psi[kDenseWeight]);
  const ad::Var b = tape.constant(psi[kDenseBias]);
  const ad::Var e = tape.constant(embeddings);
  const ad::Var logits = ad::dense(tape, e, w, b);
  return tape.value(ad::softmax(tape, logits));
}

std::vector<std::vector<double>> predict_proba(const ModelBundle& bundle, std::span<const Matrix> windows) {
  const Tensor probs = classify(bundle.psi, embed(bundle, windows));
  const std::size_t K = bundle.config.n_classes;
  std::vector<std::vector<double>> out(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    out[i].assign(probs.data().begin() + static_cast<std::ptrdiff_t>(i * K),
                  probs.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * K));
  }
  return out;
}

namespace {

constexpr const char* kCheckpointFormat = "swpc-checkpoint";
constexpr int kCheckpointVersion = 1;

struct NamedTensorRef {
  std::string name;
  Shape shape;
};

std::vector<NamedTensorRef> checkpoint_layout(const NetConfig& c) {
  std::vector<NamedTensorRef> layout;
  const auto ts = theta_shapes(c);
  for (std::size_t i = 0; i < ts.size(); ++i) layout.push_back({theta_names()[i], ts[i]});
  const auto ps = psi_shapes(c);
  for (std::size_t i = 0; i < ps.size(); ++i) layout.push_back({psi_names()[i], ps[i]});
  const std::size_t widths[3] = {c.f1, c.f2, c.f2};
  for (std::size_t i = 0; i < 3; ++i) {
    layout.push_back({"bn" + std::to_string(i + 1) + ".running_mean", {widths[i]}});
    layout.push_back({"bn" + std::to_string(i + 1) + ".running_var", {widths[i]}});
  }
  return layout;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(bytes, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
  char bytes[sizeof(T)];
  if (!in.read(bytes, sizeof(T))) throw TruncatedFileError(path.string() + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  const auto layout = checkpoint_layout(bundle.config);
  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["net"] = bundle.config;
  for (const auto& t : layout) header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string text = header.dump();

  std::vector<const std::vector<double>*> blobs;
  for (const Tensor& t : bundle.theta) blobs.push_back(&t.values());
  for (const Tensor& t : bundle.psi) blobs.push_back(&t.values());
  for (const auto& s : bundle.batchnorm) {
    blobs.push_back(&s.running_mean);
    blobs.push_back(&s.running_var);
  }
  if (blobs.size() != layout.size()) throw ShapeError("model bundle does not match its configuration");
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    if (blobs[i]->size() != shape_size(layout[i].shape)) {
      throw ShapeError("tensor " + layout[i].name + " does not match its declared shape");
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* blob : blobs)
    for (double v : *blob) write_le<double>(out, v);
  if (!out) throw IoError("write failed for " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto len = read_le<std::uint64_t>(in, path);
  if (len > (1u << 24)) throw FormatError(path.string() + ": implausible checkpoint header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
    throw TruncatedFileError(path.string() + ": truncated checkpoint header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw BadMagicError(path.string() + ": not a checkpoint");
  if (header.value("version", 0) != kCheckpointVersion) {
    throw VersionMismatchError(path.string() + ": unsupported checkpoint version");
  }

  ModelBundle b;
  b.config = header.at("net").get<NetConfig>();
  b.config.validate();
  const auto layout = checkpoint_layout(b.config);
  const auto& declared = header.at("tensors");
  if (declared.size() != layout.size()) throw FormatError(path.string() + ": tensor list does not match network");
  std::vector<std::vector<double>> blobs;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (declared[i].at("name").get<std::string>() != layout[i].name ||
        declared[i].at("shape").get<Shape>() != layout[i].shape) {
      throw FormatError(path.string() + ": unexpected tensor " + declared[i].dump());
    }
    std::vector<double> v(shape_size(layout[i].shape));
    for (double& x : v) x = read_le<double>(in, path);
    blobs.push_back(std::move(v));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes in checkpoint");

  std::size_t k = 0;
  for (std::size_t i = 0; i < kThetaCount; ++i, ++k) b.theta.emplace_back(layout[k].shape, std::move(blobs[k]));
  for (std::size_t i = 0; i < kPsiCount; ++i, ++k) b.psi.emplace_back(layout[k].shape, std::move(blobs[k]));
  for (std::size_t i = 0; i < 3; ++i) {
    ad::BatchNormState s;
    s.running_mean = std::move(blobs[k++]);
    s.running_var = std::move(blobs[k++]);
    b.batchnorm.push_back(std::move(s));
  }
  return b;
}

}  // namespace swpc
