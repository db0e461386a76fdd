#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragrl/vocab.hpp"

namespace ragrl {

using ContextKey = uint64_t;

// Conditioning state: a stable hash of the last `window` context tokens.
struct PolicyState {
  ContextKey context_key = 0;
  std::vector<Token> raw_window;
};

PolicyState make_policy_state(std::span<const Token> context, int window);
ContextKey context_key_of(std::span<const Token> context, int window);

inline constexpr double kProbFloor = 1e-12;

class InvalidDistributionError : public std::runtime_error {
 public:
  explicit InvalidDistributionError(const std::string& what)
      : std::runtime_error(what) {}
};

// Inverse-CDF sampling; deterministic given the generator state. Validates
// the distribution (no negative entries, sums to 1 within 1e-9).
int sample_token(std::span<const double> dist, std::mt19937_64& rng);
int argmax_token(std::span<const double> dist);

// Uniform double in [0,1) from the raw generator. Distribution adapters from
// <random> are not portable across standard libraries; this is.
inline double canonical_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Token-level generation interface. Scripted policies keep a cursor, so the
// interface is non-const; begin_episode resets per-episode state and tells
// the policy where the prompt ends.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int vocab_size() const = 0;
  virtual void begin_episode(std::span<const Token> prompt_tokens) {
    (void)prompt_tokens;
  }
  virtual std::vector<double> next_token_dist(std::span<const Token> context) = 0;
};

// Trainable policy: softmax over per-state logit rows, hashed context windows
// as states, zero default logits for unseen states.
class TabularSoftmaxPolicy final : public Policy {
 public:
  TabularSoftmaxPolicy(int vocab_size, double temperature = 1.0, int window = 4);

  int vocab_size() const override { return vocab_size_; }
  double temperature() const { return temperature_; }
  int window() const { return window_; }

  std::vector<double> next_token_dist(std::span<const Token> context) override;
  std::vector<double> dist_for_key(ContextKey key) const;
  double logprob(ContextKey key, int token_id) const;

  // Materializes the row for a state (copy of default logits when unseen).
  std::vector<double>& row(ContextKey key);
  bool has_row(ContextKey key) const { return logits_.count(key) > 0; }
  void add_logit(ContextKey key, int token_id, double delta);
  // Raises a logit to at least `value`; used by priming.
  void raise_logit(ContextKey key, int token_id, double value);

  const std::unordered_map<ContextKey, std::vector<double>>& rows() const {
    return logits_;
  }
  const std::vector<double>& default_logits() const { return default_logits_; }
  std::vector<double>& mutable_default_logits() { return default_logits_; }

 private:
  std::vector<double> softmax(const std::vector<double>& logits) const;

  int vocab_size_;
  double temperature_;
  int window_;
  std::unordered_map<ContextKey, std::vector<double>> logits_;
  std::vector<double> default_logits_;
};

// Immutable deep copy of a TabularSoftmaxPolicy (pi_old / pi_ref).
class PolicySnapshot {
 public:
  explicit PolicySnapshot(const TabularSoftmaxPolicy& policy)
      : frozen_(std::make_shared<TabularSoftmaxPolicy>(policy)) {}

  // Non-owning view of a live policy. Only valid while the policy outlives
  // the view and is not updated between snapshot and use; the single-epoch
  // training loop relies on pi_old == pi_theta (ratio 1) and skips the copy.
  static PolicySnapshot alias(const TabularSoftmaxPolicy& policy) {
    return PolicySnapshot(std::shared_ptr<const TabularSoftmaxPolicy>(
        std::shared_ptr<void>{}, &policy));
  }

  double logprob(ContextKey key, int token_id) const {
    return frozen_->logprob(key, token_id);
  }
  std::vector<double> dist_for_key(ContextKey key) const {
    return frozen_->dist_for_key(key);
  }
  const TabularSoftmaxPolicy& policy() const { return *frozen_; }

 private:
  explicit PolicySnapshot(std::shared_ptr<const TabularSoftmaxPolicy> ptr)
      : frozen_(std::move(ptr)) {}

  std::shared_ptr<const TabularSoftmaxPolicy> frozen_;
};

inline PolicySnapshot snapshot(const TabularSoftmaxPolicy& policy) {
  return PolicySnapshot(policy);
}
inline PolicySnapshot snapshot(const PolicySnapshot& snap) { return snap; }

// Critic: state -> value, bounded map with a default for unseen states.
struct ValueTable {
  std::unordered_map<ContextKey, double> values;
  double default_value = 0.0;
  size_t capacity = 1u << 20;

  double value_of(ContextKey key) const {
    auto it = values.find(key);
    return it == values.end() ? default_value : it->second;
  }
  // Inserts are dropped once the table is full; existing entries still update.
  void set(ContextKey key, double v) {
    auto it = values.find(key);
    if (it != values.end()) {
      it->second = v;
    } else if (values.size() < capacity) {
      values.emplace(key, v);
    }
  }
};

// Deterministic test policy: emits a fixed token script as point masses,
// then <eos> forever. Single-episode ownership; begin_episode rewinds.
class ScriptedPolicy final : public Policy {
 public:
  ScriptedPolicy(std::vector<Token> script, int vocab_size)
      : script_(std::move(script)), vocab_size_(vocab_size) {}

  int vocab_size() const override { return vocab_size_; }
  void begin_episode(std::span<const Token> prompt_tokens) override {
    (void)prompt_tokens;
    cursor_ = 0;
  }
  std::vector<double> next_token_dist(std::span<const Token> context) override;

 private:
  std::vector<Token> script_;
  int vocab_size_;
  size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// External policy adapter: newline-delimited JSON over a byte stream.
// Request:  {"context":[token strings],"limit":n,"stop":[stop strings]}
// Response: {"tokens":[strings],"logprobs":[reals]}
// One request in flight per connection.
// ---------------------------------------------------------------------------

class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

class TimeoutError : public std::runtime_error {
 public:
  explicit TimeoutError(const std::string& what) : std::runtime_error(what) {}
};

class LineTransport {
 public:
  virtual ~LineTransport() = default;
  virtual void write_line(const std::string& line) = 0;
  // nullopt when no line arrives within the deadline.
  virtual std::optional<std::string> read_line(std::chrono::milliseconds deadline) = 0;
};

// Blocking transport over a connected iostream pair (pipe, socket stream).
class IostreamTransport final : public LineTransport {
 public:
  IostreamTransport(std::istream& in, std::ostream& out) : in_(in), out_(out) {}
  void write_line(const std::string& line) override;
  std::optional<std::string> read_line(std::chrono::milliseconds deadline) override;

 private:
  std::istream& in_;
  std::ostream& out_;
};

struct ExternalGenerateResult {
  std::vector<Token> tokens;
  std::vector<double> logprobs;
};

class ExternalPolicyAdapter {
 public:
  ExternalPolicyAdapter(LineTransport& transport, const Vocabulary& vocab,
                        std::chrono::milliseconds deadline)
      : transport_(transport), vocab_(vocab), deadline_(deadline) {}

  ExternalGenerateResult generate(std::span<const Token> context, int limit,
                                  std::span<const std::string> stop);

 private:
  LineTransport& transport_;
  const Vocabulary& vocab_;
  std::chrono::milliseconds deadline_;
};

}  // namespace ragrl
