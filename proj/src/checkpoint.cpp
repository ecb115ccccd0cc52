#include "ofexi/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "ofexi/config.hpp"

namespace ofexi {

namespace {

constexpr char kMagic[4] = {'O', 'F', 'X', 'C'};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <class T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void tensor(const Tensor2& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    buf_.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * m.size());
  }
  void vec(const RowVec& v) { tensor(Tensor2(v)); }
  void param(const Param& p) {
    tensor(p.value);
    tensor(p.grad);
    tensor(p.adam_m);
    tensor(p.adam_v);
    pod<std::int64_t>(p.step_count);
  }
  void gate(const GateVector& g) {
    param(g.theta);
    pod<std::uint64_t>(g.frozen.size());
    for (bool f : g.frozen) pod<std::uint8_t>(f ? 1 : 0);
    vec(g.last_sample);
    str(g.layer_id);
  }
  template <class R>
  void rng(const R& r) {
    std::ostringstream os;
    os << r;
    str(os.str());
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : buf_(b) {}
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor2 tensor() {
    const auto r = pod<std::int64_t>();
    const auto c = pod<std::int64_t>();
    if (r < 0 || c < 0 || (r > 0 && c > (1LL << 40) / r)) throw CheckpointError("bad tensor shape");
    Tensor2 m(r, c);
    const std::size_t n = sizeof(double) * static_cast<std::size_t>(r * c);
    need(n);
    if (n > 0) std::memcpy(m.data(), buf_.data() + pos_, n);
    pos_ += n;
    return m;
  }
  RowVec vec() {
    const Tensor2 m = tensor();
    if (m.rows() != 1 && m.size() != 0) throw CheckpointError("expected a row vector");
    return m.size() == 0 ? RowVec(0) : RowVec(m.row(0));
  }
  void param(Param& p) {
    p.value = tensor();
    p.grad = tensor();
    p.adam_m = tensor();
    p.adam_v = tensor();
    p.step_count = pod<std::int64_t>();
    const auto r = p.value.rows();
    const auto c = p.value.cols();
    for (const Tensor2* t : {&p.grad, &p.adam_m, &p.adam_v}) {
      if (t->rows() != r || t->cols() != c) throw CheckpointError("Param buffers disagree in shape");
    }
  }
  void gate(GateVector& g) {
    param(g.theta);
    const auto n = pod<std::uint64_t>();
    if (n != static_cast<std::uint64_t>(g.theta.cols())) throw CheckpointError("gate size mismatch");
    g.frozen.assign(n, false);
    for (std::uint64_t i = 0; i < n; ++i) g.frozen[i] = pod<std::uint8_t>() != 0;
    g.last_sample = vec();
    g.layer_id = str();
  }
  template <class R>
  void rng(R& r) {
    std::istringstream is(str());
    is >> r;
    if (!is) throw CheckpointError("bad rng state");
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

void write_block(Writer& w, const DenseBlock& b) {
  w.param(b.W);
  w.param(b.b);
  w.param(b.V);
  w.param(b.bn.scale);
  w.param(b.bn.shift);
  w.vec(b.bn.running_mean);
  w.vec(b.bn.running_var);
  w.pod(b.bn.momentum);
  w.pod(b.bn.epsilon);
  w.gate(b.gate);
}

void read_block(Reader& r, DenseBlock& b) {
  r.param(b.W);
  r.param(b.b);
  r.param(b.V);
  r.param(b.bn.scale);
  r.param(b.bn.shift);
  b.bn.running_mean = r.vec();
  b.bn.running_var = r.vec();
  b.bn.momentum = r.pod<double>();
  b.bn.epsilon = r.pod<double>();
  r.gate(b.gate);
}

void write_mlp(Writer& w, const MlpXiNet& n) {
  w.str(n.name);
  w.pod<std::uint64_t>(n.hidden.size());
  for (const auto& l : n.hidden) {
    w.param(l.W);
    w.param(l.b);
    w.gate(l.gate);
  }
  w.param(n.W_out);
  w.param(n.b_out);
}

void read_mlp(Reader& r, MlpXiNet& n) {
  n.name = r.str();
  n.hidden.resize(r.pod<std::uint64_t>());
  for (auto& l : n.hidden) {
    r.param(l.W);
    r.param(l.b);
    r.gate(l.gate);
  }
  r.param(n.W_out);
  r.param(n.b_out);
}

void write_agent(Writer& w, const Agent& a) {
  w.pod<std::int64_t>(a.ofe.d_o);
  w.pod<std::int64_t>(a.ofe.d_a);
  w.pod<std::uint64_t>(a.ofe.blocks_o.size());
  for (const auto& b : a.ofe.blocks_o) write_block(w, b);
  w.pod<std::uint64_t>(a.ofe.blocks_oa.size());
  for (const auto& b : a.ofe.blocks_oa) write_block(w, b);
  w.param(a.ofe.W_pred);
  for (const MlpXiNet* n : {&a.pi, &a.v, &a.v_target, &a.q1, &a.q2}) write_mlp(w, *n);
  w.pod<std::uint8_t>(a.plain ? 1 : 0);
}

void read_agent(Reader& r, Agent& a) {
  a.ofe.d_o = r.pod<std::int64_t>();
  a.ofe.d_a = r.pod<std::int64_t>();
  a.ofe.blocks_o.resize(r.pod<std::uint64_t>());
  for (auto& b : a.ofe.blocks_o) read_block(r, b);
  a.ofe.blocks_oa.resize(r.pod<std::uint64_t>());
  for (auto& b : a.ofe.blocks_oa) read_block(r, b);
  r.param(a.ofe.W_pred);
  for (MlpXiNet* n : {&a.pi, &a.v, &a.v_target, &a.q1, &a.q2}) read_mlp(r, *n);
  a.plain = r.pod<std::uint8_t>() != 0;
}

}  // namespace

std::string serialize(const Trainer& t) {
  Writer w;
  w.str(to_config_text(t.config()));
  w.pod<std::int64_t>(t.step_count());
  w.pod<std::uint64_t>(t.episode_index());
  w.vec(t.current_obs());
  w.pod(t.last_aux_loss());
  w.pod(t.last_eval_return());
  w.pod<std::uint8_t>(t.gates_rounded() ? 1 : 0);

  w.vec(t.env().raw_state());
  w.pod<std::int32_t>(t.env().elapsed_steps());
  w.rng(t.rngs().action);
  w.rng(t.rngs().replay);
  w.rng(t.rngs().gates);

  write_agent(w, t.agent());

  const ReplayBuffer& b = t.buffer();
  w.pod<std::uint64_t>(b.capacity());
  w.pod<std::uint64_t>(b.size());
  w.pod<std::uint64_t>(b.cursor());
  for (const Tensor2* m : {&b.obs, &b.act, &b.reward, &b.next_obs, &b.terminal}) w.tensor(*m);

  const std::string& payload = w.bytes();
  std::string out(kMagic, 4);
  Writer head;
  head.pod<std::uint32_t>(kCheckpointVersion);
  head.pod<std::uint64_t>(payload.size());
  out += head.bytes();
  out += payload;
  Writer tail;
  tail.pod<std::uint64_t>(fnv1a(payload));
  out += tail.bytes();
  return out;
}

std::unique_ptr<Trainer> deserialize(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint file");
  }
  const std::string header = bytes.substr(4, 12);
  Reader h(header);
  const auto version = h.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  const auto len = h.pod<std::uint64_t>();
  if (bytes.size() != 16 + len + 8) throw CheckpointError("checkpoint truncated or padded");
  const std::string payload = bytes.substr(16, len);
  const std::string tail_bytes = bytes.substr(16 + len);
  Reader tail(tail_bytes);
  if (tail.pod<std::uint64_t>() != fnv1a(payload)) throw CheckpointError("checkpoint checksum mismatch");

  try {
    Reader r(payload);
    RunConfig cfg;
    apply_config_text(r.str(), cfg);
    auto t = std::make_unique<Trainer>(cfg);
    const auto step = r.pod<std::int64_t>();
    const auto episode = r.pod<std::uint64_t>();
    const RowVec obs = r.vec();
    const auto last_aux = r.pod<double>();
    const auto last_eval = r.pod<double>();
    const bool rounded = r.pod<std::uint8_t>() != 0;
    const RowVec env_state = r.vec();
    const auto elapsed = r.pod<std::int32_t>();
    t->env().restore(env_state, elapsed);
    r.rng(t->rngs().action);
    r.rng(t->rngs().replay);
    r.rng(t->rngs().gates);
    read_agent(r, t->agent());

    const auto cap = r.pod<std::uint64_t>();
    const auto size = r.pod<std::uint64_t>();
    const auto cursor = r.pod<std::uint64_t>();
    ReplayBuffer& b = t->buffer();
    if (cap != b.capacity()) throw CheckpointError("replay capacity does not match the config");
    for (Tensor2* m : {&b.obs, &b.act, &b.reward, &b.next_obs, &b.terminal}) {
      Tensor2 loaded = r.tensor();
      if (loaded.rows() != m->rows() || loaded.cols() != m->cols()) {
        throw CheckpointError("replay storage shape mismatch");
      }
      *m = std::move(loaded);
    }
    b.restore(size, cursor);
    if (!r.done()) throw CheckpointError("trailing bytes in checkpoint payload");
    t->restore_progress(step, episode, obs, last_aux, last_eval, rounded);
    return t;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Trainer& t, const std::string& path) {
  const std::string bytes = serialize(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("short write to " + path);
}

std::unique_ptr<Trainer> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

}  // namespace ofexi
