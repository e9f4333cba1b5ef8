/* Copyright 2026 The specdraft Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "specdraft/oracles.hpp"

#include "specdraft/adversarial.hpp"
#include "specdraft/ops.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>

namespace specdraft {

namespace {

using Clock = std::chrono::steady_clock;
using Mat = RowMatrix<double>;
using T64 = Tensor<double>;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::size_t ipow(int base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

ProbDist random_dist(int vocab, Rng& rng, double zero_prob) {
  std::vector<double> p(static_cast<std::size_t>(vocab));
  double total = 0;
  for (auto& v : p) {
    const double u = rng.uniform();
    v = rng.uniform() < zero_prob ? 0.0 : u * u * u + 1e-3;
    total += v;
  }
  if (total == 0) {
    p[rng.below(static_cast<std::uint64_t>(vocab))] = 1;
    total = 1;
  }
  for (auto& v : p) v /= total;
  return ProbDist(std::move(p));
}

// Walks every branch of the verification randomness. Each call to accept or
// sample consumes one scripted choice; unexplored calls take choice 0 and
// record how many branches they had.
struct ScriptedChooser {
  std::vector<int> script;
  std::vector<int> branches;
  std::size_t pos = 0;
  double weight = 1;

  int next(int n) {
    if (pos == script.size()) script.push_back(0);
    if (pos == branches.size()) branches.push_back(n);
    return script[pos++];
  }

  bool accept(double p) {
    if (p >= 1) {
      next(1);
      return true;
    }
    if (p <= 0) {
      next(1);
      return false;
    }
    const bool yes = next(2) == 0;
    weight *= yes ? p : 1 - p;
    return yes;
  }

  int sample(std::span<const double> probs) {
    std::vector<int> support;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0) support.push_back(static_cast<int>(i));
    }
    const int tok = support[static_cast<std::size_t>(next(static_cast<int>(support.size())))];
    weight *= probs[static_cast<std::size_t>(tok)];
    return tok;
  }

  // Advances to the next unexplored branch sequence; false when exhausted.
  bool advance() {
    script.resize(pos);
    branches.resize(pos);
    while (!script.empty()) {
      if (script.back() + 1 < branches.back()) {
        ++script.back();
        pos = 0;
        weight = 1;
        return true;
      }
      script.pop_back();
      branches.pop_back();
    }
    return false;
  }
};

// Adds `weight` times every continuation of `seq` under the target up to
// length t+1.
void complete_with_target(const ChainModel& m, std::vector<int>& seq, double weight, std::vector<double>& joint) {
  if (static_cast<int>(seq.size()) == m.t + 1) {
    std::size_t idx = 0;
    for (std::size_t i = seq.size(); i-- > 0;) idx = idx * static_cast<std::size_t>(m.vocab) + static_cast<std::size_t>(seq[i]);
    joint[idx] += weight;
    return;
  }
  const ProbDist& q = m.q_at(seq);
  for (int x = 0; x < m.vocab; ++x) {
    if (q[static_cast<std::size_t>(x)] == 0) continue;
    seq.push_back(x);
    complete_with_target(m, seq, weight * q[static_cast<std::size_t>(x)], joint);
    seq.pop_back();
  }
}

void enumerate_drafts(const ChainModel& m, AcceptanceRule rule, std::vector<int>& drafts, double draft_weight,
                      std::vector<double>& joint) {
  if (static_cast<int>(drafts.size()) < m.t) {
    const ProbDist& d = m.d_at(drafts);
    for (int x = 0; x < m.vocab; ++x) {
      if (d[static_cast<std::size_t>(x)] == 0) continue;
      drafts.push_back(x);
      enumerate_drafts(m, rule, drafts, draft_weight * d[static_cast<std::size_t>(x)], joint);
      drafts.pop_back();
    }
    return;
  }
  std::vector<ProbDist> q, d;
  for (int i = 0; i <= m.t; ++i) {
    const std::span<const int> prefix(drafts.data(), static_cast<std::size_t>(i));
    q.push_back(m.q_at(prefix));
    if (i < m.t) d.push_back(m.d_at(prefix));
  }
  ScriptedChooser chooser;
  do {
    const VerifyOutcome out = verify_chain<ScriptedChooser>(q, d, drafts, chooser, rule);
    std::vector<int> seq = out.emitted;
    if (static_cast<int>(seq.size()) > m.t + 1) throw ContractViolation("oracle: more than t+1 tokens emitted");
    complete_with_target(m, seq, draft_weight * chooser.weight, joint);
  } while (chooser.advance());
}

struct GradCase {
  std::vector<Mat> inputs;
  std::function<T64(const std::vector<T64>&)> fn;
};

Mat random_mat(Index r, Index c, Rng& rng, double lo = -1, double hi = 1) {
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

// Values bounded away from the clamp edges so differences stay on one side.
Mat clamp_safe_mat(Index r, Index c, Rng& rng, double lo, double hi) {
  Mat m = random_mat(r, c, rng, lo - 0.5, hi + 0.5);
  for (Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (std::abs(v - lo) < 1e-2) v = lo + 2e-2;
    if (std::abs(v - hi) < 1e-2) v = hi - 2e-2;
  }
  return m;
}

double eval_loss(const GradCase& c, const std::vector<Mat>& inputs, const Mat& weights) {
  NoGradGuard<double> guard;
  std::vector<T64> ts;
  for (const auto& m : inputs) ts.push_back(T64::from(m));
  const T64 out = c.fn(ts);
  return (out.value().array() * weights.array()).sum();
}

// Worst normwise relative error across the inputs of one case.
double check_case(const GradCase& c, double h, Rng& rng) {
  std::vector<T64> ts;
  for (const auto& m : c.inputs) ts.push_back(T64::from(m, true));
  const T64 out = c.fn(ts);
  const Mat weights = random_mat(out.rows(), out.cols(), rng);
  const T64 loss = sum(mul(out, T64::from(weights)));
  backward(loss);

  double worst = 0;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    std::vector<Mat> perturbed = c.inputs;
    std::vector<double> numeric(static_cast<std::size_t>(c.inputs[k].size()));
    for (Index i = 0; i < c.inputs[k].size(); ++i) {
      perturbed[k].data()[i] = c.inputs[k].data()[i] + h;
      const double up = eval_loss(c, perturbed, weights);
      perturbed[k].data()[i] = c.inputs[k].data()[i] - h;
      const double down = eval_loss(c, perturbed, weights);
      perturbed[k].data()[i] = c.inputs[k].data()[i];
      numeric[static_cast<std::size_t>(i)] = (up - down) / (2 * h);
    }
    Mat analytic = ts[k].has_grad() ? ts[k].grad() : Mat::Zero(c.inputs[k].rows(), c.inputs[k].cols());
    worst = std::max(worst, normwise_relative_error(std::span<const double>(analytic.data(), analytic.size()), numeric));
  }
  return worst;
}

using CaseMaker = std::function<GradCase(Rng&)>;

std::vector<std::pair<std::string, CaseMaker>> gradient_catalog() {
  std::vector<std::pair<std::string, CaseMaker>> cat;
  auto dim = [](Rng& rng) { return static_cast<Index>(1 + rng.below(4)); };

  cat.emplace_back("matmul", [dim](Rng& rng) {
    const Index m = dim(rng), k = dim(rng), n = dim(rng);
    return GradCase{{random_mat(m, k, rng), random_mat(k, n, rng)}, [](const auto& x) { return matmul(x[0], x[1]); }};
  });
  cat.emplace_back("add", [dim](Rng& rng) {
    const Index m = dim(rng), n = dim(rng);
    return GradCase{{random_mat(m, n, rng), random_mat(m, n, rng)}, [](const auto& x) { return add(x[0], x[1]); }};
  });
  cat.emplace_back("add_broadcast", [dim](Rng& rng) {
    const Index m = dim(rng) + 1, n = dim(rng);
    return GradCase{{random_mat(m, n, rng), random_mat(1, n, rng)}, [](const auto& x) { return add(x[0], x[1]); }};
  });
  cat.emplace_back("sub", [dim](Rng& rng) {
    const Index m = dim(rng), n = dim(rng);
    return GradCase{{random_mat(m, n, rng), random_mat(m, n, rng)}, [](const auto& x) { return sub(x[0], x[1]); }};
  });
  cat.emplace_back("mul", [dim](Rng& rng) {
    const Index m = dim(rng), n = dim(rng);
    return GradCase{{random_mat(m, n, rng), random_mat(m, n, rng)}, [](const auto& x) { return mul(x[0], x[1]); }};
  });
  cat.emplace_back("scale", [dim](Rng& rng) {
    const double f = rng.uniform() * 4 - 2;
    return GradCase{{random_mat(dim(rng), dim(rng), rng)}, [f](const auto& x) { return scale(x[0], f); }};
  });
  cat.emplace_back("add_scalar", [dim](Rng& rng) {
    const double c = rng.uniform() * 4 - 2;
    return GradCase{{random_mat(dim(rng), dim(rng), rng)}, [c](const auto& x) { return add_scalar(x[0], c); }};
  });
  cat.emplace_back("sigmoid", [dim](Rng& rng) {
    return GradCase{{random_mat(dim(rng), dim(rng), rng, -4, 4)}, [](const auto& x) { return sigmoid(x[0]); }};
  });
  cat.emplace_back("silu", [dim](Rng& rng) {
    return GradCase{{random_mat(dim(rng), dim(rng), rng, -4, 4)}, [](const auto& x) { return silu(x[0]); }};
  });
  cat.emplace_back("log", [dim](Rng& rng) {
    return GradCase{{random_mat(dim(rng), dim(rng), rng, 0.2, 3)}, [](const auto& x) { return log(x[0]); }};
  });
  cat.emplace_back("clamp", [dim](Rng& rng) {
    return GradCase{{clamp_safe_mat(dim(rng), dim(rng), rng, -0.5, 0.5)},
                    [](const auto& x) { return clamp(x[0], -0.5, 0.5); }};
  });
  cat.emplace_back("softmax_rows", [dim](Rng& rng) {
    return GradCase{{random_mat(dim(rng), dim(rng) + 1, rng, -3, 3)}, [](const auto& x) { return softmax_rows(x[0]); }};
  });
  cat.emplace_back("log_softmax_rows", [dim](Rng& rng) {
    return GradCase{{random_mat(dim(rng), dim(rng) + 1, rng, -3, 3)},
                    [](const auto& x) { return log_softmax_rows(x[0]); }};
  });
  cat.emplace_back("layer_norm", [dim](Rng& rng) {
    const Index m = dim(rng), n = dim(rng) + 2;
    return GradCase{{random_mat(m, n, rng, -2, 2), random_mat(1, n, rng, 0.5, 1.5), random_mat(1, n, rng)},
                    [](const auto& x) { return layer_norm(x[0], x[1], x[2]); }};
  });
  cat.emplace_back("embedding", [dim](Rng& rng) {
    const Index rows = dim(rng) + 1, n = dim(rng);
    std::vector<int> ids(static_cast<std::size_t>(dim(rng) + 1));
    for (auto& id : ids) id = static_cast<int>(rng.below(static_cast<std::uint64_t>(rows)));
    return GradCase{{random_mat(rows, n, rng)}, [ids](const auto& x) { return embedding(x[0], std::span<const int>(ids)); }};
  });
  cat.emplace_back("gather_rows", [dim](Rng& rng) {
    const Index rows = dim(rng) + 1, n = dim(rng);
    std::vector<Index> idx(static_cast<std::size_t>(dim(rng) + 1));
    for (auto& i : idx) i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(rows)));
    return GradCase{{random_mat(rows, n, rng)},
                    [idx](const auto& x) { return gather_rows(x[0], std::span<const Index>(idx)); }};
  });
  cat.emplace_back("pick", [dim](Rng& rng) {
    const Index rows = dim(rng), n = dim(rng) + 1;
    std::vector<int> cols(static_cast<std::size_t>(rows));
    for (auto& c : cols) c = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    return GradCase{{random_mat(rows, n, rng)}, [cols](const auto& x) { return pick(x[0], std::span<const int>(cols)); }};
  });
  cat.emplace_back("concat_cols", [dim](Rng& rng) {
    const Index m = dim(rng);
    return GradCase{{random_mat(m, dim(rng), rng), random_mat(m, dim(rng), rng)},
                    [](const auto& x) { return concat_cols(x[0], x[1]); }};
  });
  cat.emplace_back("concat_rows", [dim](Rng& rng) {
    const Index n = dim(rng);
    return GradCase{{random_mat(dim(rng), n, rng), random_mat(dim(rng), n, rng), random_mat(dim(rng), n, rng)},
                    [](const auto& x) { return concat_rows(std::vector<T64>{x[0], x[1], x[2]}); }};
  });
  cat.emplace_back("sum", [dim](Rng& rng) {
    return GradCase{{random_mat(dim(rng), dim(rng), rng)}, [](const auto& x) { return sum(x[0]); }};
  });
  cat.emplace_back("mean", [dim](Rng& rng) {
    return GradCase{{random_mat(dim(rng), dim(rng), rng)}, [](const auto& x) { return mean(x[0]); }};
  });
  cat.emplace_back("causal_attention", [dim](Rng& rng) {
    const Index heads = 1 + static_cast<Index>(rng.below(2)), hd = dim(rng), L = dim(rng), groups = 1 + rng.below(2);
    const Index rows = L * static_cast<Index>(groups), cols = heads * hd;
    return GradCase{{random_mat(rows, cols, rng), random_mat(rows, cols, rng), random_mat(rows, cols, rng)},
                    [heads, L](const auto& x) { return causal_attention(x[0], x[1], x[2], heads, L); }};
  });
  cat.emplace_back("distill_loss", [dim](Rng& rng) {
    const Index m = dim(rng), n = dim(rng) + 1;
    return GradCase{{random_mat(m, n, rng, -2, 2), random_mat(m, n, rng, -2, 2)},
                    [](const auto& x) { return distill_loss(x[0], x[1]); }};
  });
  cat.emplace_back("discriminator_loss", [dim](Rng& rng) {
    const Index m = dim(rng);
    return GradCase{{random_mat(m, 1, rng, 0.1, 0.9), random_mat(m, 1, rng, 0.1, 0.9)},
                    [](const auto& x) { return discriminator_loss(x[0], x[1]); }};
  });
  cat.emplace_back("generator_loss", [dim](Rng& rng) {
    const Index m = dim(rng), n = dim(rng) + 1;
    return GradCase{{random_mat(m, 1, rng, 0.1, 0.9), random_mat(m, n, rng, -2, 2), random_mat(m, n, rng, -2, 2)},
                    [](const auto& x) { return generator_loss(x[0], x[1], x[2], 0.3); }};
  });
  return cat;
}

// Drafts from a precomputed greedy continuation, corrupting some tokens on a
// fixed pattern. The position is recovered by matching the hidden state
// bitwise against single-token decoding, so a match also proves that batched
// verification rows equal one-token rows.
class ReplayHead : public DraftHead {
 public:
  ReplayHead(const HeadConfig& config, const TargetModel& target, std::vector<int> continuation)
      : DraftHead(config), tokens_(std::move(continuation)) {
    TargetSession session(target);
    for (std::size_t i = 0; i + 1 < tokens_.size(); ++i) {
      const TargetOutput out = session.extend(std::span<const int>(&tokens_[i], 1));
      index_[key(std::span<const float>(out.hidden.data(), static_cast<std::size_t>(out.hidden.cols())))] =
          static_cast<long>(i);
    }
  }

  ParamList<float> parameters() const override { return {}; }
  Index forwards_per_draft(int) const override { return 1; }
  std::vector<Tensor<float>> train_logits(const Tensor<float>&, const std::vector<std::vector<int>>&, int) const override {
    throw std::logic_error("replay head is not trainable");
  }

  DraftResult draft(std::span<const float> hidden, int, int t, double, Rng&, std::span<const int>) const override {
    long consumed_last = -1;
    if (auto it = index_.find(key(hidden)); it != index_.end()) {
      consumed_last = it->second;
    } else if (std::any_of(hidden.begin(), hidden.end(), [](float v) { return v != 0; })) {
      throw ContractViolation("replay head: hidden state matches no single-token decoding row");
    }
    DraftResult r;
    for (int j = 0; j < t; ++j) {
      const auto pos = static_cast<std::size_t>(consumed_last + 2 + j);
      int tok = pos < tokens_.size() ? tokens_[pos] : 0;
      if ((pos * 2654435761u) % 5 == 0) tok = (tok + 1) % config_.vocab_size;
      std::vector<double> p(static_cast<std::size_t>(config_.vocab_size), 0.0);
      p[static_cast<std::size_t>(tok)] = 1;
      r.tokens.push_back(tok);
      r.dists.emplace_back(std::move(p));
    }
    return r;
  }

 private:
  static std::string key(std::span<const float> h) {
    return std::string(reinterpret_cast<const char*>(h.data()), h.size() * sizeof(float));
  }

  std::vector<int> tokens_;
  std::map<std::string, long> index_;
};

bool accounting_holds(const DecodeTrace& trace, int t, std::string& why) {
  Index emitted = 0;
  for (const auto& it : trace.iterations) {
    if (static_cast<int>(it.outcome.emitted.size()) != it.outcome.accepted + 1) {
      why = "iteration emitted != accepted + 1";
      return false;
    }
    emitted += it.outcome.accepted + 1;
  }
  if (emitted != trace.emitted() || static_cast<Index>(trace.iterations.size()) != trace.target_forwards) {
    why = "trace totals disagree with iterations";
    return false;
  }
  const double ell = trace.target_forwards ? double(emitted) / double(trace.target_forwards) : 1;
  if (ell < 1 || ell > t + 1) {
    why = "ell outside [1, t+1]";
    return false;
  }
  return true;
}

}  // namespace

std::size_t ChainModel::prefix_index(std::span<const int> prefix, int vocab) {
  std::size_t offset = 0;
  for (std::size_t len = 0; len < prefix.size(); ++len) offset += ipow(vocab, static_cast<int>(len));
  std::size_t idx = 0;
  for (std::size_t i = prefix.size(); i-- > 0;) idx = idx * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(prefix[i]);
  return offset + idx;
}

ChainModel ChainModel::random(int vocab, int t, Rng& rng) {
  ChainModel m;
  m.vocab = vocab;
  m.t = t;
  std::size_t nq = 0;
  for (int len = 0; len <= t; ++len) nq += ipow(vocab, len);
  const std::size_t nd = nq - ipow(vocab, t);
  for (std::size_t i = 0; i < nq; ++i) m.q.push_back(random_dist(vocab, rng, 0.2));
  for (std::size_t i = 0; i < nd; ++i) {
    const double mode = rng.uniform();
    if (mode < 0.15) {
      m.d.push_back(m.q[i]);
    } else if (mode < 0.25) {
      std::vector<double> p(static_cast<std::size_t>(vocab), 0.0);
      p[rng.below(static_cast<std::uint64_t>(vocab))] = 1;
      m.d.emplace_back(std::move(p));
    } else {
      m.d.push_back(random_dist(vocab, rng, 0.2));
    }
  }
  return m;
}

nlohmann::json ChainModel::to_json() const {
  nlohmann::json j;
  j["vocab"] = vocab;
  j["t"] = t;
  j["q"] = nlohmann::json::array();
  j["d"] = nlohmann::json::array();
  for (const auto& p : q) j["q"].push_back(p.probs);
  for (const auto& p : d) j["d"].push_back(p.probs);
  return j;
}

std::vector<double> enumerate_emitted_joint(const ChainModel& m, AcceptanceRule rule) {
  std::vector<double> joint(ipow(m.vocab, m.t + 1), 0.0);
  std::vector<int> drafts;
  enumerate_drafts(m, rule, drafts, 1.0, joint);
  return joint;
}

std::vector<double> target_joint(const ChainModel& m) {
  std::vector<double> joint(ipow(m.vocab, m.t + 1), 0.0);
  std::vector<int> seq;
  complete_with_target(m, seq, 1.0, joint);
  return joint;
}

double mutated_acceptance(double q, double d) { return std::min(1.0, std::sqrt(q / d)); }

double normwise_relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

std::vector<GradCheckResult> check_gradients(int cases, double h, std::uint64_t seed) {
  std::vector<GradCheckResult> results;
  for (const auto& [name, make] : gradient_catalog()) {
    Rng rng(seed, "gradcheck." + name);
    GradCheckResult r{name, 0, 0};
    for (int c = 0; c < cases; ++c) {
      r.worst = std::max(r.worst, check_case(make(rng), h, rng));
      ++r.cases;
    }
    results.push_back(r);
  }
  return results;
}

SuiteResult run_lossless_suite(const OracleOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult s{"losslessness", true, 0, "", nullptr};
  Rng rng(o.seed, "oracle.lossless");
  double worst = 0;
  for (int c = 0; c < o.lossless_cases; ++c) {
    ChainModel m;
    if (c == 0) {
      // vocab 2, t 1: q uniform, d certain of token 0.
      m.vocab = 2;
      m.t = 1;
      m.q = {ProbDist({0.5, 0.5}), ProbDist({0.5, 0.5}), ProbDist({0.5, 0.5})};
      m.d = {ProbDist({1.0, 0.0})};
    } else {
      m = ChainModel::random(2 + static_cast<int>(rng.below(7)), 1 + static_cast<int>(rng.below(3)), rng);
    }
    const auto got = enumerate_emitted_joint(m, o.rule);
    const auto want = target_joint(m);
    for (std::size_t i = 0; i < got.size(); ++i) {
      const double err = std::abs(got[i] - want[i]);
      worst = std::max(worst, err);
      if (err > o.lossless_tol && s.passed) {
        s.passed = false;
        std::vector<int> seq;
        std::size_t idx = i;
        for (int k = 0; k <= m.t; ++k) {
          seq.push_back(static_cast<int>(idx % static_cast<std::size_t>(m.vocab)));
          idx /= static_cast<std::size_t>(m.vocab);
        }
        s.counterexample = {{"suite", s.name}, {"case", c},        {"model", m.to_json()},
                            {"sequence", seq}, {"emitted_probability", got[i]}, {"target_probability", want[i]}};
      }
    }
    if (!s.passed) break;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d chain models, max |joint error| %.3g", o.lossless_cases, worst);
  s.detail = buf;
  s.seconds = seconds_since(t0);
  return s;
}

SuiteResult run_gradient_suite(const OracleOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult s{"gradients", true, 0, "", nullptr};
  const auto results = check_gradients(o.grad_cases, o.grad_h, o.seed);
  double worst = 0;
  for (const auto& r : results) {
    worst = std::max(worst, r.worst);
    if (r.worst > o.grad_tol && s.passed) {
      s.passed = false;
      s.counterexample = {{"suite", s.name}, {"op", r.op}, {"relative_error", r.worst}, {"tolerance", o.grad_tol}};
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu ops x %d cases, worst relative error %.3g", results.size(), o.grad_cases, worst);
  s.detail = buf;
  s.seconds = seconds_since(t0);
  return s;
}

SuiteResult run_loss_anchor_suite(const OracleOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult s{"loss_anchors", true, 0, "", nullptr};
  auto fail = [&](const std::string& what, double got, double want) {
    if (!s.passed) return;
    s.passed = false;
    s.counterexample = {{"suite", s.name}, {"anchor", what}, {"got", got}, {"expected", want}};
  };
  auto column = [](std::initializer_list<double> v) {
    Mat m(static_cast<Index>(v.size()), 1);
    Index i = 0;
    for (double x : v) m(i++, 0) = x;
    return T64::from(m);
  };
  NoGradGuard<double> guard;

  const double ld_half = discriminator_loss(column({0.5, 0.5, 0.5}), column({0.5, 0.5})).item();
  if (std::abs(ld_half - 2 * std::numbers::ln2) > 1e-9) fail("L_D at D=0.5", ld_half, 2 * std::numbers::ln2);

  const double ld_hand = discriminator_loss(column({0.8}), column({0.3})).item();
  if (std::abs(ld_hand - (-std::log(0.8) - std::log(0.7))) > 1e-12) fail("L_D(0.8, 0.3)", ld_hand, -std::log(0.8) - std::log(0.7));

  Rng rng(o.seed, "oracle.anchors");
  for (int c = 0; c < 20; ++c) {
    const Index m = 1 + static_cast<Index>(rng.below(6)), n = 2 + static_cast<Index>(rng.below(7));
    const T64 d = T64::from(random_mat(m, n, rng, -3, 3));
    const T64 q = T64::from(random_mat(m, n, rng, -3, 3));
    const T64 dfake = T64::from(random_mat(m, 1, rng, 0.01, 0.99));
    const double g0 = generator_loss(dfake, d, q, 0.0).item();
    const double kl = distill_loss(d, q).item();
    if (std::memcmp(&g0, &kl, sizeof g0) != 0) fail("L_G(lambda=0) bitwise distill", g0, kl);
    const double self = distill_loss(q, q).item();
    if (std::abs(self) > 1e-12) fail("distill(d=q)", self, 0);
  }

  const T64 same = T64::from(Mat::Constant(1, 3, 0.25));
  const double g_half = generator_loss(column({0.5}), same, same, 0.1).item();
  if (std::abs(g_half - 0.1 * std::numbers::ln2) > 1e-12) fail("L_G(lambda=0.1, D=0.5, d=q)", g_half, 0.1 * std::numbers::ln2);
  const double g_nine = generator_loss(column({0.9}), same, same, 0.5).item();
  if (std::abs(g_nine + 0.5 * std::log(0.9)) > 1e-12) fail("L_G(lambda=0.5, D=0.9, d=q)", g_nine, -0.5 * std::log(0.9));

  Mat ql(1, 2), dl(1, 2);
  ql << std::log(2.0), std::log(1.0);
  dl << 0.0, 0.0;
  const double kl2 = distill_loss(T64::from(dl), T64::from(ql)).item();
  const double want2 = 2.0 / 3.0 * std::log((2.0 / 3.0) / 0.5) + 1.0 / 3.0 * std::log((1.0 / 3.0) / 0.5);
  if (std::abs(kl2 - want2) > 1e-9) fail("two-token KL", kl2, want2);

  s.detail = "disc 2ln2, hand values, lambda=0 identity, self-distillation";
  s.seconds = seconds_since(t0);
  return s;
}

SuiteResult run_greedy_suite(const OracleOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult s{"greedy_equivalence", true, 0, "", nullptr};
  TargetConfig tc;
  tc.d_model = 32;
  tc.n_layers = 2;
  tc.n_heads = 2;
  tc.max_seq_len = 64;
  tc.ff_mult = 2;
  TargetModel target = TargetModel::init(tc, o.seed);
  target.freeze();

  Rng prompt_rng(o.seed, "oracle.greedy.prompts");
  std::vector<std::vector<int>> prompts;
  for (int p = 0; p < 4; ++p) {
    std::vector<int> prompt(1 + prompt_rng.below(8));
    for (auto& tok : prompt) tok = static_cast<int>(32 + prompt_rng.below(95));
    prompts.push_back(std::move(prompt));
  }
  const Index max_new = 40;
  int runs = 0;
  Index accepted = 0;
  auto check = [&](const DraftHead& head, const std::vector<int>& prompt, const std::vector<int>& expected,
                   const std::string& label) {
    Rng rng(o.seed, "oracle.greedy.decode");
    const DecodeResult r = spec_decode(target, head, prompt, max_new, 0.0, rng);
    ++runs;
    for (const auto& it : r.trace.iterations) accepted += it.outcome.accepted;
    std::string why;
    if (r.tokens != expected) {
      why = "token mismatch";
    } else if (!accounting_holds(r.trace, head.config().draft_len, why)) {
    }
    if (!why.empty() && s.passed) {
      s.passed = false;
      s.counterexample = {{"suite", s.name}, {"head", label},  {"prompt", prompt},
                          {"reason", why},   {"expected", expected}, {"got", r.tokens}};
    }
  };

  for (const auto& prompt : prompts) {
    Rng vrng(o.seed, "oracle.greedy.vanilla");
    const std::vector<int> expected = generate_autoregressive(target, prompt, max_new, 0.0, vrng).tokens;
    for (HeadKind kind : {HeadKind::medusa, HeadKind::eagle}) {
      for (int K = 1; K <= 3; ++K) {
        auto head = make_head(head_config_for(tc, kind, K), target, o.seed + static_cast<std::uint64_t>(K));
        check(*head, prompt, expected, to_string(kind) + " K=" + std::to_string(K));
      }
    }
    try {
      ReplayHead replay(head_config_for(tc, HeadKind::medusa, 1), target, expected);
      check(replay, prompt, expected, "replay");
    } catch (const ContractViolation& e) {
      if (s.passed) {
        s.passed = false;
        s.counterexample = {{"suite", s.name}, {"head", "replay"}, {"prompt", prompt}, {"reason", e.what()}};
      }
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d decodes, %ld drafted tokens accepted", runs, static_cast<long>(accepted));
  s.detail = buf;
  s.seconds = seconds_since(t0);
  return s;
}

OracleReport run_oracles(const OracleOptions& options, std::ostream& log) {
  OracleReport report;
  using Suite = SuiteResult (*)(const OracleOptions&);
  const std::pair<const char*, Suite> suites[] = {{"losslessness", run_lossless_suite},
                                                  {"gradients", run_gradient_suite},
                                                  {"loss_anchors", run_loss_anchor_suite},
                                                  {"greedy_equivalence", run_greedy_suite}};
  for (const auto& [name, suite] : suites) {
    SuiteResult r;
    try {
      r = suite(options);
    } catch (const std::exception& e) {
      r.name = name;
      r.passed = false;
      r.detail = e.what();
      r.counterexample = {{"suite", name}, {"exception", e.what()}};
    }
    char line[256];
    std::snprintf(line, sizeof line, "%-20s %s  %7.2f s  %s", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.seconds,
                  r.detail.c_str());
    log << line << "\n";
    if (!r.passed && report.passed) {
      report.passed = false;
      report.counterexample = r.counterexample;
    }
    report.suites.push_back(std::move(r));
  }
  return report;
}

}  // namespace specdraft
