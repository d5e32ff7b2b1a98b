#include "bowsense/neural_nets.hpp"

#include <bit>
#include <cstring>

#include "bowsense/io_util.hpp"

namespace bowsense::nn {

double gradient_check(ModelKind kind, std::uint64_t seed) {
  return kind == ModelKind::Lstm ? lstm_gradient_check(seed) : mlp_gradient_check(seed);
}

namespace {

constexpr char kMagic[8] = {'B', 'O', 'W', 'S', 'E', 'N', 'S', 'E'};
constexpr std::uint32_t kKindLstm = 1;
constexpr std::uint32_t kKindMlp = 2;
// Upper bound on any stored dimension; guards allocation on corrupt headers.
constexpr std::uint64_t kMaxDim = 1u << 20;

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void vec(const Eigen::VectorXd& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  // Row-major element order.
  void mat(const Eigen::MatrixXd& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  std::string take() { return std::move(buf_); }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }

 private:
  void le(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  Eigen::VectorXd vec(std::uint64_t expected) {
    const auto n = u64();
    if (n != expected) throw ModelFormatError("model file: vector length mismatch");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  Eigen::MatrixXd mat(std::uint64_t rows, std::uint64_t cols) {
    if (u64() != rows || u64() != cols) throw ModelFormatError("model file: tensor shape mismatch");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    }
    return m;
  }
  void magic() {
    need(sizeof kMagic);
    if (std::memcmp(bytes_.data() + pos_, kMagic, sizeof kMagic) != 0) {
      throw ModelFormatError("model file: bad magic header");
    }
    pos_ += sizeof kMagic;
  }
  void finish() const {
    if (pos_ != bytes_.size()) throw ModelFormatError("model file: trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ModelFormatError("model file: truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, std::uint32_t kind, std::size_t input_dim, std::size_t hidden_dim,
                  const TrainConfig& cfg, const Standardizer& norm) {
  w.raw(kMagic, sizeof kMagic);
  w.u32(kModelFormatVersion);
  w.u32(kind);
  w.u64(input_dim);
  w.u64(hidden_dim);
  w.u64(cfg.seed);
  w.f64(cfg.learning_rate);
  w.f64(cfg.momentum);
  w.u64(cfg.epochs);
  w.u64(cfg.batch_size);
  w.f64(cfg.clip_norm);
  w.vec(norm.mean);
  w.vec(norm.scale);
}

struct Header {
  std::uint64_t input_dim = 0;
  std::uint64_t hidden_dim = 0;
  TrainConfig cfg;
  Standardizer norm;
};

Header read_header(Reader& r, std::uint32_t expected_kind, std::optional<std::size_t> expected_input_dim) {
  r.magic();
  if (const auto v = r.u32(); v != kModelFormatVersion) {
    throw ModelFormatError("model file: unsupported version " + std::to_string(v));
  }
  if (const auto k = r.u32(); k != expected_kind) {
    throw ModelFormatError("model file: holds model kind " + std::to_string(k) + ", expected " +
                           std::to_string(expected_kind));
  }
  Header h;
  h.input_dim = r.u64();
  h.hidden_dim = r.u64();
  if (h.input_dim == 0 || h.hidden_dim == 0 || h.input_dim > kMaxDim || h.hidden_dim > kMaxDim) {
    throw ModelFormatError("model file: implausible dimensions");
  }
  if (expected_input_dim && h.input_dim != *expected_input_dim) {
    throw ModelFormatError("model file: input_dim " + std::to_string(h.input_dim) +
                           " does not match the pipeline's " + std::to_string(*expected_input_dim));
  }
  h.cfg.seed = r.u64();
  h.cfg.learning_rate = r.f64();
  h.cfg.momentum = r.f64();
  h.cfg.epochs = r.u64();
  h.cfg.batch_size = r.u64();
  h.cfg.clip_norm = r.f64();
  h.norm.mean = r.vec(h.input_dim);
  h.norm.scale = r.vec(h.input_dim);
  return h;
}

void check_finite(const std::vector<const Eigen::MatrixXd*>& tensors) {
  for (const auto* t : tensors) {
    if (!t->allFinite()) throw ModelFormatError("model file: non-finite weights");
  }
}

}  // namespace

std::string serialize(const LstmModel& m) {
  Writer w;
  write_header(w, kKindLstm, m.input_dim, m.hidden_dim, m.config, m.input_norm);
  for (const auto* t : m.tensors()) w.mat(*t);
  return w.take();
}

std::string serialize(const MlpModel& m) {
  Writer w;
  write_header(w, kKindMlp, m.input_dim, m.hidden_dim, m.config, m.input_norm);
  for (const auto* t : m.tensors()) w.mat(*t);
  return w.take();
}

LstmModel deserialize_lstm(const std::string& bytes, std::optional<std::size_t> expected_input_dim) {
  Reader r(bytes);
  const auto h = read_header(r, kKindLstm, expected_input_dim);
  auto m = LstmModel::zeros(h.input_dim, h.hidden_dim);
  m.config = h.cfg;
  m.input_norm = h.norm;
  for (auto* t : m.tensors()) {
    *t = r.mat(static_cast<std::uint64_t>(t->rows()), static_cast<std::uint64_t>(t->cols()));
  }
  r.finish();
  check_finite(std::as_const(m).tensors());
  return m;
}

MlpModel deserialize_mlp(const std::string& bytes, std::optional<std::size_t> expected_input_dim) {
  Reader r(bytes);
  const auto h = read_header(r, kKindMlp, expected_input_dim);
  auto m = MlpModel::zeros(h.input_dim, h.hidden_dim);
  m.config = h.cfg;
  m.input_norm = h.norm;
  for (auto* t : m.tensors()) {
    *t = r.mat(static_cast<std::uint64_t>(t->rows()), static_cast<std::uint64_t>(t->cols()));
  }
  r.finish();
  check_finite(std::as_const(m).tensors());
  return m;
}

void save_model(const std::filesystem::path& path, const LstmModel& model) {
  io::write_file_atomic(path, serialize(model));
}

void save_model(const std::filesystem::path& path, const MlpModel& model) {
  io::write_file_atomic(path, serialize(model));
}

LstmModel load_lstm(const std::filesystem::path& path, std::optional<std::size_t> expected_input_dim) {
  return deserialize_lstm(io::read_file(path), expected_input_dim);
}

MlpModel load_mlp(const std::filesystem::path& path, std::optional<std::size_t> expected_input_dim) {
  return deserialize_mlp(io::read_file(path), expected_input_dim);
}

}  // namespace bowsense::nn
