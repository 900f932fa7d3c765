#include "sitrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "sitrec/error.hpp"

namespace sitrec::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'I', 'T', 'R', 'E', 'C', 'K', 'P'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void i32(int v) { pod(static_cast<std::int32_t>(v)); }
  void u8(bool v) { pod(static_cast<std::uint8_t>(v)); }
  void f64(double v) { pod(v); }
  void matrix(const Eigen::MatrixXd& m) {
    pod(static_cast<std::int64_t>(m.rows()));
    pod(static_cast<std::int64_t>(m.cols()));
    out_.write(reinterpret_cast<const char*>(m.data()),
               static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  void vector(const Eigen::VectorXd& v) { matrix(v); }
  template <typename T, typename Fn>
  void optional(const std::optional<T>& v, Fn&& fn) {
    u8(v.has_value());
    if (v) fn(*v);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw ParseError("checkpoint is truncated", 0);
    return v;
  }
  int i32() { return pod<std::int32_t>(); }
  bool u8() {
    const auto b = pod<std::uint8_t>();
    if (b > 1) throw ParseError("checkpoint has a corrupt flag byte", 0);
    return b == 1;
  }
  double f64() { return pod<double>(); }
  Eigen::MatrixXd matrix() {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0 || (cols > 0 && rows > (std::int64_t{1} << 40) / cols)) {
      throw ParseError("checkpoint has a corrupt tensor shape", 0);
    }
    Eigen::MatrixXd m(rows, cols);
    in_.read(reinterpret_cast<char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in_) throw ParseError("checkpoint is truncated", 0);
    return m;
  }
  Eigen::VectorXd vector() {
    Eigen::MatrixXd m = matrix();
    if (m.cols() != 1 && m.size() != 0) throw ParseError("checkpoint: expected a vector", 0);
    return Eigen::Map<Eigen::VectorXd>(m.data(), m.size());
  }

 private:
  std::istream& in_;
};

void write_state(Writer& w, const model::DynamicState& s) {
  w.vector(s.embedding);
  w.optional(s.last_update, [&](double t) { w.f64(t); });
}

model::DynamicState read_state(Reader& r) {
  model::DynamicState s;
  s.embedding = r.vector();
  if (r.u8()) s.last_update = r.f64();
  return s;
}

}  // namespace

void write(const Checkpoint& ckpt, std::ostream& out) {
  Writer w(out);
  out.write(kMagic, sizeof(kMagic));
  w.pod(kFormatVersion);

  const auto& D = ckpt.params.dims;
  w.i32(D.embedding);
  w.i32(D.topics);
  w.i32(D.weeks);
  w.i32(D.students);
  w.i32(D.threads);

  const auto& c = ckpt.config;
  w.i32(c.embedding_dim);
  w.i32(c.epochs);
  w.f64(c.learning_rate);
  w.f64(c.lambda_student);
  w.f64(c.lambda_thread);
  w.f64(c.alpha);
  w.f64(c.beta);
  w.pod(static_cast<std::uint64_t>(c.seed));
  w.f64(c.clip_norm);
  w.f64(c.init_stddev);
  w.i32(static_cast<int>(c.activation));
  for (auto name : train::AblationFlags::kNames) w.u8(c.ablation.get(name));
  w.u8(c.record_trajectories);
  w.u8(c.state_lookback);

  const auto& h = ckpt.params.hyper;
  w.f64(h.alpha);
  w.f64(h.beta);
  w.f64(h.lambda_student);
  w.f64(h.lambda_thread);
  w.i32(static_cast<int>(h.activation));

  const auto& t = ckpt.params.weights;
  w.matrix(t.student_update);
  w.matrix(t.thread_update);
  w.vector(t.time_context);
  w.matrix(t.course_context);
  w.matrix(t.predictor);
  w.vector(t.predictor_bias);

  w.f64(ckpt.train_end);
  w.f64(ckpt.state.time_scale);
  w.pod(static_cast<std::uint64_t>(ckpt.state.students.size()));
  for (const auto& s : ckpt.state.students) {
    write_state(w, s.state);
    w.optional(s.last_thread, [&](int p) { w.i32(p); });
    w.optional(s.last_week, [&](int k) { w.i32(k); });
  }
  w.pod(static_cast<std::uint64_t>(ckpt.state.threads.size()));
  for (const auto& s : ckpt.state.threads) write_state(w, s);
  if (!out) throw Error("checkpoint write failed");
}

Checkpoint read(std::istream& in) {
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a checkpoint file", 0);
  }
  Reader r(in);
  const auto version = r.pod<std::uint32_t>();
  if (version != kFormatVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  }
  auto activation = [](int v) {
    if (v != 0 && v != 1) throw ParseError("checkpoint has an unknown activation", 0);
    return static_cast<model::Activation>(v);
  };

  Checkpoint ckpt;
  auto& D = ckpt.params.dims;
  D.embedding = r.i32();
  D.topics = r.i32();
  D.weeks = r.i32();
  D.students = r.i32();
  D.threads = r.i32();

  auto& c = ckpt.config;
  c.embedding_dim = r.i32();
  c.epochs = r.i32();
  c.learning_rate = r.f64();
  c.lambda_student = r.f64();
  c.lambda_thread = r.f64();
  c.alpha = r.f64();
  c.beta = r.f64();
  c.seed = r.pod<std::uint64_t>();
  c.clip_norm = r.f64();
  c.init_stddev = r.f64();
  c.activation = activation(r.i32());
  for (auto name : train::AblationFlags::kNames) c.ablation.set(name, r.u8());
  c.record_trajectories = r.u8();
  c.state_lookback = r.u8();

  auto& h = ckpt.params.hyper;
  h.alpha = r.f64();
  h.beta = r.f64();
  h.lambda_student = r.f64();
  h.lambda_thread = r.f64();
  h.activation = activation(r.i32());

  auto& t = ckpt.params.weights;
  t.student_update = r.matrix();
  t.thread_update = r.matrix();
  t.time_context = r.vector();
  t.course_context = r.matrix();
  t.predictor = r.matrix();
  t.predictor_bias = r.vector();
  try {
    ckpt.params.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("checkpoint parameters are inconsistent: ") + e.what(), 0);
  }

  ckpt.train_end = r.f64();
  ckpt.state.time_scale = r.f64();
  const auto n_students = r.pod<std::uint64_t>();
  if (n_students != static_cast<std::uint64_t>(D.students)) {
    throw ParseError("checkpoint student count mismatch", 0);
  }
  for (std::uint64_t i = 0; i < n_students; ++i) {
    train::StudentReplay s;
    s.state = read_state(r);
    if (r.u8()) s.last_thread = r.i32();
    if (r.u8()) s.last_week = r.i32();
    ckpt.state.students.push_back(std::move(s));
  }
  const auto n_threads = r.pod<std::uint64_t>();
  if (n_threads != static_cast<std::uint64_t>(D.threads)) {
    throw ParseError("checkpoint thread count mismatch", 0);
  }
  for (std::uint64_t i = 0; i < n_threads; ++i) ckpt.state.threads.push_back(read_state(r));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes after checkpoint", 0);
  }
  return ckpt;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write(ckpt, out);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read(in);
}

}  // namespace sitrec::checkpoint
