#pragma once

#include <fbm/memory/trajectory.hpp>
#include <fbm/nn/layers.hpp>

#include <deque>
#include <string>

namespace fbm::memory {

using ad::Tape;
using ad::Var;

// h' = (1 - z) * n + z * h with
//   z = sigmoid(W_z [h, x] + b_z), r = sigmoid(W_r [h, x] + b_r),
//   n = tanh(W_n [r * h, x] + b_n).
class GruCell {
 public:
  GruCell() = default;
  GruCell(const std::string& name, Index input_dim, Index hidden_dim, Rng& rng)
      : update_(name + ".update", hidden_dim + input_dim, hidden_dim, rng),
        reset_(name + ".reset", hidden_dim + input_dim, hidden_dim, rng),
        candidate_(name + ".candidate", hidden_dim + input_dim, hidden_dim, rng) {}

  Var forward(Tape& t, Var h, Var x) const {
    require(h.cols() == hidden_dim() && x.cols() == input_dim(),
            "gru_cell: expected hidden " + std::to_string(hidden_dim()) + " and input " +
                std::to_string(input_dim()) + ", got " + shape_str(h.value()) + " and " +
                shape_str(x.value()));
    const Var hx = ad::concat({h, x});
    const Var z = ad::sigmoid(update_.forward(t, hx));
    const Var r = ad::sigmoid(reset_.forward(t, hx));
    const Var n = ad::tanh(candidate_.forward(t, ad::concat({ad::mul(r, h), x})));
    return ad::add(n, ad::mul(z, ad::sub(h, n)));
  }

  Index hidden_dim() const { return update_.out_dim(); }
  Index input_dim() const { return update_.in_dim() - update_.out_dim(); }

  nn::Linear& update_gate() { return update_; }
  nn::Linear& reset_gate() { return reset_; }
  nn::Linear& candidate() { return candidate_; }

  void collect(ad::ParamRefs& out) {
    update_.collect(out);
    reset_.collect(out);
    candidate_.collect(out);
  }
  void collect(ad::ConstParamRefs& out) const {
    update_.collect(out);
    reset_.collect(out);
    candidate_.collect(out);
  }

 private:
  nn::Linear update_;
  nn::Linear reset_;
  nn::Linear candidate_;
};

enum class EncoderKind { gru, frame_stack, last_obs };

inline std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::gru: return "gru";
    case EncoderKind::frame_stack: return "frame_stack";
    case EncoderKind::last_obs: return "last_obs";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "gru") return EncoderKind::gru;
  if (s == "frame_stack") return EncoderKind::frame_stack;
  if (s == "last_obs") return EncoderKind::last_obs;
  throw ContractViolation("unknown encoder kind: " + s);
}

struct EncoderSpec {
  EncoderKind kind = EncoderKind::last_obs;
  int context_length = 1;
  int stack_k = 4;
  int embed_dim = 64;
  int hidden_dim = 64;
  nn::NormKind norm = nn::NormKind::rms;
};

// Maps a trajectory window to a fixed-width context vector.
//   gru         - embeds each (action, observation) pair with a one-layer
//                 preprocessor and folds a GRU over the window from h = 0.
//                 Padded slots are processed like any other slot.
//   frame_stack - concatenation of the newest k raw pairs.
//   last_obs    - the newest observation alone.
class TrajectoryEncoder {
 public:
  TrajectoryEncoder() = default;
  TrajectoryEncoder(const std::string& name, const EncoderSpec& spec, int action_dim, int obs_dim,
                    Rng& rng)
      : spec_(spec), action_dim_(action_dim), obs_dim_(obs_dim) {
    require(spec.context_length >= 1, "encoder: context length must be >= 1");
    if (spec.kind == EncoderKind::frame_stack) {
      require(spec.stack_k >= 1 && spec.stack_k <= spec.context_length,
              "encoder: frame stack depth must lie in [1, context_length]");
    }
    if (spec.kind == EncoderKind::gru) {
      nn::MlpSpec embed;
      embed.in = action_dim + obs_dim;
      embed.out = spec.embed_dim;
      embed.norm = spec.norm;
      embed.output_norm_tanh = true;
      embed_ = nn::Mlp(name + ".embed", embed, rng);
      cell_ = GruCell(name + ".gru", spec.embed_dim, spec.hidden_dim, rng);
    }
  }

  const EncoderSpec& spec() const { return spec_; }
  EncoderKind kind() const { return spec_.kind; }
  int context_length() const { return spec_.context_length; }
  int action_dim() const { return action_dim_; }
  int obs_dim() const { return obs_dim_; }
  bool recurrent() const { return spec_.kind == EncoderKind::gru; }

  int output_dim() const {
    switch (spec_.kind) {
      case EncoderKind::gru: return spec_.hidden_dim;
      case EncoderKind::frame_stack: return spec_.stack_k * (action_dim_ + obs_dim_);
      case EncoderKind::last_obs: return obs_dim_;
    }
    return 0;
  }

  Var encode(Tape& t, const TrajectoryBatch& traj) const {
    require(traj.length() == spec_.context_length,
            "encode_trajectory: window length " + std::to_string(traj.length()) +
                " does not match context length " + std::to_string(spec_.context_length));
    require(traj.action_dim == action_dim_ && traj.obs_dim == obs_dim_,
            "encode_trajectory: pair width mismatch");
    const Index n = traj.batch();
    switch (spec_.kind) {
      case EncoderKind::last_obs:
        return t.constant(traj.slots.back().rightCols(obs_dim_));
      case EncoderKind::frame_stack: {
        Matrix out(n, output_dim());
        const int k = spec_.stack_k;
        for (int i = 0; i < k; ++i) {
          out.middleCols(static_cast<Index>(i) * traj.pair_dim(), traj.pair_dim()) =
              traj.slots[static_cast<std::size_t>(traj.length() - k + i)];
        }
        return t.constant(std::move(out));
      }
      case EncoderKind::gru: {
        const int L = traj.length();
        Matrix stacked(n * L, traj.pair_dim());
        for (int i = 0; i < L; ++i) stacked.middleRows(static_cast<Index>(i) * n, n) = traj.slots[static_cast<std::size_t>(i)];
        const Var embedded = embed_.forward(t, t.constant(std::move(stacked)));
        // Padded slots are skipped: h stays at zero until the first valid
        // slot, so a window starting at the episode start matches a stream.
        Var h = t.constant(Matrix::Zero(n, spec_.hidden_dim));
        for (int i = 0; i < L; ++i) {
          const Var next = cell_.forward(t, h, ad::slice_rows(embedded, static_cast<Index>(i) * n, n));
          Matrix mask(n, 1);
          for (Index r = 0; r < n; ++r) {
            mask(r, 0) = i >= L - traj.valid_count[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
          }
          if (mask.minCoeff() == 1.0) {
            h = next;
          } else {
            h = ad::add(h, ad::mul_col(ad::sub(next, h), t.constant(std::move(mask))));
          }
        }
        return h;
      }
    }
    throw ContractViolation("encoder: unknown kind");
  }

  Matrix encode_values(const TrajectoryBatch& traj) const {
    Tape t;
    return encode(t, traj).value();
  }

  // One recurrent update from h_prev with the newest (action, observation)
  // pairs, n x (action_dim + obs_dim).
  Matrix step_hidden(const Matrix& h_prev, const Matrix& pairs) const {
    require(recurrent(), "rollout_hidden_update: encoder is not recurrent");
    require(pairs.cols() == action_dim_ + obs_dim_, "rollout_hidden_update: pair width mismatch");
    Tape t;
    const Var x = embed_.forward(t, t.constant(pairs));
    return cell_.forward(t, t.constant(h_prev), x).value();
  }

  nn::Mlp& embedding() { return embed_; }
  GruCell& cell() { return cell_; }
  const GruCell& cell() const { return cell_; }

  void collect(ad::ParamRefs& out) {
    if (!recurrent()) return;
    embed_.collect(out);
    cell_.collect(out);
  }
  void collect(ad::ConstParamRefs& out) const {
    if (!recurrent()) return;
    embed_.collect(out);
    cell_.collect(out);
  }

 private:
  EncoderSpec spec_;
  int action_dim_ = 0;
  int obs_dim_ = 0;
  nn::Mlp embed_;
  GruCell cell_;
};

// Online encoding during rollouts. In `full_history` mode the recurrent
// kind streams its hidden state over the whole episode. In `window` mode it
// re-encodes the newest context_length pairs each step, which matches the
// training windows exactly. The other kinds keep the newest slots.
enum class StreamMode { full_history, window };

inline std::string to_string(StreamMode m) { return m == StreamMode::window ? "window" : "full_history"; }

inline StreamMode parse_stream_mode(const std::string& s) {
  if (s == "window") return StreamMode::window;
  if (s == "full_history" || s == "stream") return StreamMode::full_history;
  throw ContractViolation("unknown context mode: " + s);
}

class EncoderStream {
 public:
  EncoderStream(const TrajectoryEncoder& encoder, Index batch, StreamMode mode = StreamMode::full_history)
      : encoder_(&encoder), batch_(batch), mode_(mode) {
    reset();
  }

  void reset() {
    if (encoder_->recurrent()) hidden_ = Matrix::Zero(batch_, encoder_->spec().hidden_dim);
    window_.clear();
    pushed_ = 0;
    const int keep = encoder_->kind() == EncoderKind::frame_stack ? encoder_->spec().stack_k : 1;
    for (int i = 0; i < keep; ++i) window_.push_back(Matrix::Zero(batch_, encoder_->action_dim() + encoder_->obs_dim()));
  }

  // Feeds (a_{t-1}, o_t) and returns the context for time t.
  const Matrix& push(const Matrix& prev_actions, const Matrix& observations) {
    require(prev_actions.rows() == batch_ && observations.rows() == batch_,
            "encoder stream: batch size mismatch");
    Matrix pair(batch_, encoder_->action_dim() + encoder_->obs_dim());
    pair << prev_actions, observations;
    ++pushed_;
    switch (encoder_->kind()) {
      case EncoderKind::gru:
        if (mode_ == StreamMode::full_history) {
          hidden_ = encoder_->step_hidden(hidden_, pair);
          current_ = hidden_;
        } else {
          const int L = encoder_->context_length();
          if (static_cast<int>(window_.size()) >= L) window_.pop_front();
          window_.push_back(std::move(pair));
          TrajectoryBatch b = TrajectoryBatch::zeros(batch_, L, encoder_->action_dim(), encoder_->obs_dim());
          const int valid = static_cast<int>(std::min<long>(pushed_, L));
          for (int i = 0; i < valid; ++i) {
            b.slots[static_cast<std::size_t>(L - valid + i)] =
                window_[window_.size() - static_cast<std::size_t>(valid - i)];
          }
          std::fill(b.valid_count.begin(), b.valid_count.end(), valid);
          current_ = encoder_->encode_values(b);
        }
        break;
      case EncoderKind::frame_stack: {
        window_.pop_front();
        window_.push_back(pair);
        current_.resize(batch_, encoder_->output_dim());
        Index off = 0;
        for (const Matrix& m : window_) {
          current_.middleCols(off, m.cols()) = m;
          off += m.cols();
        }
        break;
      }
      case EncoderKind::last_obs:
        current_ = observations;
        break;
    }
    return current_;
  }

  const Matrix& current() const { return current_; }
  StreamMode mode() const { return mode_; }

 private:
  const TrajectoryEncoder* encoder_;
  Index batch_;
  StreamMode mode_;
  Matrix hidden_;
  std::deque<Matrix> window_;
  Matrix current_;
  long pushed_ = 0;
};

}  // namespace fbm::memory
