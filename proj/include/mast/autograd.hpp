#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "mast/tensor.hpp"

namespace mast {

class Tape;

namespace detail {
inline Tape*& active_tape_slot() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

/// Ordered record of differentiable operations for one forward pass.
/// Entries are appended as ops execute, so the list is topologically
/// sorted by construction. A tape belongs to the thread that activated it.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Tensor output, std::vector<Tensor> inputs, BackwardFn fn) {
    entries_.push_back(Entry{std::move(output), std::move(inputs), std::move(fn)});
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  /// Seeds d loss / d loss = 1 and replays the entries in reverse. The tape
  /// is discarded afterwards.
  void backward(Tensor loss) {
    if (loss.numel() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw Error("backward(): loss is not connected to any tensor requiring grad");
    loss.accumulate_grad(std::vector<double>{1.0});
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (!it->output.has_grad()) continue;  // not reachable from loss
      it->fn(it->output.grad());
      if (!it->output.same_storage(loss)) it->output.zero_grad();
    }
    entries_.clear();
  }

 private:
  struct Entry {
    Tensor output;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

/// Makes `tape` the recording target for ops on this thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape) : previous_(detail::active_tape_slot()) { detail::active_tape_slot() = &tape; }
  ~TapeScope() { detail::active_tape_slot() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Temporarily stops recording (evaluation passes).
class NoGradScope {
 public:
  NoGradScope() : previous_(detail::active_tape_slot()) { detail::active_tape_slot() = nullptr; }
  ~NoGradScope() { detail::active_tape_slot() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

inline Tape* active_tape() { return detail::active_tape_slot(); }

/// Backward through the tape active on this thread.
inline void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (!tape) throw Error("backward(): no active tape on this thread");
  tape->backward(loss);
}

namespace detail {

template <class... Ts>
bool any_requires_grad(const Ts&... ts) {
  return (ts.requires_grad() || ...);
}

/// Records `fn` when a tape is active and some input requires grad.
/// Returns the finished output (marked requires_grad if recorded).
inline Tensor finish(Tensor out, std::vector<Tensor> inputs, Tape::BackwardFn fn, const char* name) {
  if (finite_checks_enabled()) check_finite(out, name);
  Tape* tape = active_tape();
  if (!tape) return out;
  bool needed = false;
  for (const auto& in : inputs) needed = needed || in.requires_grad();
  if (!needed) return out;
  out.set_requires_grad(true);
  tape->record(out, std::move(inputs), std::move(fn));
  return out;
}

inline bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!active_tape()) return false;
  for (auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace detail

}  // namespace mast
