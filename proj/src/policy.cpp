#include "ragrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "ragrl/hash.hpp"

namespace ragrl {

PolicyState make_policy_state(std::span<const Token> context, int window) {
  PolicyState state;
  size_t w = static_cast<size_t>(std::max(window, 0));
  size_t start = context.size() > w ? context.size() - w : 0;
  state.raw_window.assign(context.begin() + start, context.end());
  state.context_key = context_key_of(context, window);
  return state;
}

ContextKey context_key_of(std::span<const Token> context, int window) {
  size_t w = static_cast<size_t>(std::max(window, 0));
  size_t start = context.size() > w ? context.size() - w : 0;
  uint64_t h = fnv1a_init();
  h = fnv1a_u64(h, static_cast<uint64_t>(context.size() - start));
  for (size_t i = start; i < context.size(); ++i) {
    h = fnv1a_u64(h, static_cast<uint64_t>(static_cast<int64_t>(context[i].id)));
  }
  return h;
}

namespace {

void validate_dist(std::span<const double> dist) {
  double sum = 0.0;
  for (double d : dist) {
    if (d < 0.0 || !std::isfinite(d)) {
      throw InvalidDistributionError("negative or non-finite probability");
    }
    sum += d;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidDistributionError("probabilities sum to " + std::to_string(sum));
  }
}

}  // namespace

int sample_token(std::span<const double> dist, std::mt19937_64& rng) {
  validate_dist(dist);
  double u = canonical_uniform(rng);
  double cum = 0.0;
  int last_positive = -1;
  for (size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] > 0.0) last_positive = static_cast<int>(i);
    cum += dist[i];
    if (u < cum) return static_cast<int>(i);
  }
  // Rounding can leave cum fractionally below 1; fall back to the last
  // positive-probability token.
  if (last_positive < 0) throw InvalidDistributionError("all-zero distribution");
  return last_positive;
}

int argmax_token(std::span<const double> dist) {
  validate_dist(dist);
  int best = 0;
  for (size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = static_cast<int>(i);
  }
  return best;
}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(int vocab_size, double temperature,
                                           int window)
    : vocab_size_(vocab_size),
      temperature_(temperature),
      window_(window),
      default_logits_(static_cast<size_t>(vocab_size), 0.0) {
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be > 0");
}

std::vector<double> TabularSoftmaxPolicy::softmax(const std::vector<double>& logits) const {
  std::vector<double> probs(logits.size());
  double max_logit = logits[0];
  for (double l : logits) max_logit = std::max(max_logit, l);
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp((logits[i] - max_logit) / temperature_);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

std::vector<double> TabularSoftmaxPolicy::next_token_dist(
    std::span<const Token> context) {
  return dist_for_key(context_key_of(context, window_));
}

std::vector<double> TabularSoftmaxPolicy::dist_for_key(ContextKey key) const {
  auto it = logits_.find(key);
  return softmax(it == logits_.end() ? default_logits_ : it->second);
}

double TabularSoftmaxPolicy::logprob(ContextKey key, int token_id) const {
  std::vector<double> probs = dist_for_key(key);
  return std::log(std::max(probs.at(static_cast<size_t>(token_id)), kProbFloor));
}

std::vector<double>& TabularSoftmaxPolicy::row(ContextKey key) {
  auto it = logits_.find(key);
  if (it == logits_.end()) it = logits_.emplace(key, default_logits_).first;
  return it->second;
}

void TabularSoftmaxPolicy::add_logit(ContextKey key, int token_id, double delta) {
  row(key)[static_cast<size_t>(token_id)] += delta;
}

void TabularSoftmaxPolicy::raise_logit(ContextKey key, int token_id, double value) {
  double& slot = row(key)[static_cast<size_t>(token_id)];
  slot = std::max(slot, value);
}

std::vector<double> ScriptedPolicy::next_token_dist(std::span<const Token> context) {
  (void)context;
  std::vector<double> dist(static_cast<size_t>(vocab_size_), 0.0);
  int id = cursor_ < script_.size() ? script_[cursor_].id : kEos;
  ++cursor_;
  dist.at(static_cast<size_t>(id)) = 1.0;
  return dist;
}

void IostreamTransport::write_line(const std::string& line) {
  out_ << line << '\n';
  out_.flush();
}

std::optional<std::string> IostreamTransport::read_line(
    std::chrono::milliseconds deadline) {
  (void)deadline;  // blocking stream; EOF reads as no response
  std::string line;
  if (!std::getline(in_, line)) return std::nullopt;
  return line;
}

ExternalGenerateResult ExternalPolicyAdapter::generate(
    std::span<const Token> context, int limit, std::span<const std::string> stop) {
  nlohmann::json request;
  request["context"] = nlohmann::json::array();
  for (const Token& t : context) request["context"].push_back(t.text);
  request["limit"] = limit;
  request["stop"] = std::vector<std::string>(stop.begin(), stop.end());
  transport_.write_line(request.dump());

  std::optional<std::string> line = transport_.read_line(deadline_);
  if (!line.has_value()) {
    throw TimeoutError("no response within " + std::to_string(deadline_.count()) +
                       " ms");
  }
  nlohmann::json response = nlohmann::json::parse(*line, nullptr, false);
  if (response.is_discarded() || !response.is_object() ||
      !response.contains("tokens") || !response.contains("logprobs") ||
      !response["tokens"].is_array() || !response["logprobs"].is_array()) {
    throw ProtocolError("malformed response line");
  }
  if (response["tokens"].size() != response["logprobs"].size()) {
    throw ProtocolError("tokens/logprobs length mismatch");
  }
  if (response["tokens"].size() > static_cast<size_t>(std::max(limit, 0))) {
    throw ProtocolError("response exceeds requested limit");
  }
  ExternalGenerateResult result;
  for (const auto& t : response["tokens"]) {
    if (!t.is_string()) throw ProtocolError("non-string token in response");
    std::string text = t.get<std::string>();
    result.tokens.push_back(Token{vocab_.id_of(text), std::move(text)});
  }
  for (const auto& lp : response["logprobs"]) {
    if (!lp.is_number()) throw ProtocolError("non-numeric logprob in response");
    result.logprobs.push_back(lp.get<double>());
  }
  return result;
}

}  // namespace ragrl
