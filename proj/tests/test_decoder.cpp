#include <doctest.h>

#include <cmath>
#include <vector>

#include "support/finite_diff.hpp"
#include "tcvqa/decoder.hpp"
#include "tcvqa/rng.hpp"

using namespace tcv;

namespace {

DecoderLM small_decoder(int64_t vocab, int64_t d_h, int64_t layers, uint64_t seed, double std = 0.3) {
  rng r(seed);
  return make_decoder(vocab, d_h, 2, layers, 64, r, std);
}

// Zero-layer decoder whose position table dictates the next token: the row at
// rank r votes (via a dominant one-hot position vector) for token plan[r].
DecoderLM rigged_decoder(const std::vector<int32_t>& plan) {
  rng r(1);
  DecoderLM d = make_decoder(8, 8, 2, 0, 16, r, 0.0);
  for (int64_t v = 0; v < 8; ++v) d.tok_table.data()[v * 8 + v] = 0.01;
  for (int64_t p = 0; p < 16; ++p) {
    const int32_t target = p < static_cast<int64_t>(plan.size()) ? plan[static_cast<size_t>(p)] : 4;
    d.pos_table.data()[p * 8 + target] = 10.0;
  }
  return d;
}

}  // namespace

TEST_CASE("zeroed tied projection gives exactly ln V per answer token") {
  DecoderLM d = small_decoder(8, 16, 2, 3);
  for (auto& v : d.tok_table.data()) v = 0.0;  // logits = h . 0^T = uniform
  rng r(4);
  Tensor prefix = Tensor::randn({3, 16}, r, 0.0, 1.0);
  std::vector<int32_t> prompt = {1, 5, 6};
  std::vector<int32_t> answer = {7, 4, 2};
  Tensor loss = forward_loss(d, prefix, prompt, answer);
  CHECK(std::abs(loss.item() - std::log(8.0)) <= 1e-12);
}

TEST_CASE("front padding the prompt leaves the loss bit-identical") {
  DecoderLM d = small_decoder(10, 16, 2, 5);
  rng r(6);
  Tensor prefix = Tensor::randn({4, 16}, r, 0.0, 1.0);
  std::vector<int32_t> prompt = {1, 7, 5};
  std::vector<int32_t> padded = {0, 0, 1, 7, 5};
  std::vector<int32_t> answer = {6, 9, 2};
  const double a = forward_loss(d, prefix, prompt, answer).item();
  const double b = forward_loss(d, prefix, padded, answer).item();
  CHECK(a == b);
}

TEST_CASE("teacher forcing: the row predicting a2 never sees a2") {
  DecoderLM d = small_decoder(12, 16, 2, 7);
  rng rr(8);
  Tensor prefix = Tensor::randn({2, 16}, rr, 0.0, 1.0);
  std::vector<int32_t> prompt = {1, 4, 9};
  std::vector<int32_t> ans_a = {6, 7, 2};  // a1=6, a2=7, EOS
  std::vector<int32_t> ans_b = {6, 5, 2};  // a2 swapped

  auto answer_logits = [&](std::span<const int32_t> answer) {
    std::vector<int32_t> input(prompt.begin(), prompt.end());
    input.insert(input.end(), answer.begin(), answer.end() - 1);
    Tensor h = decoder_hidden(d, prefix, input);
    const int64_t p = prefix.rows(), lp = 3, t = 3;
    return matmul_nt(slice_rows(h, p + lp - 1, p + lp + t - 1), d.tok_table);
  };
  Tensor la = answer_logits(ans_a);
  Tensor lb = answer_logits(ans_b);
  const int64_t v = la.cols();
  for (int64_t j = 0; j < v; ++j) {
    CHECK(la.data()[0 * v + j] == lb.data()[0 * v + j]);  // row predicting a1
    CHECK(la.data()[1 * v + j] == lb.data()[1 * v + j]);  // row predicting a2: sees only a1
  }
  bool row2_differs = false;
  for (int64_t j = 0; j < v; ++j) row2_differs |= la.data()[2 * v + j] != lb.data()[2 * v + j];
  CHECK(row2_differs);  // row predicting EOS sits after a2 and must see it

  Tensor ra = cross_entropy_rows(la, ans_a);
  Tensor rb = cross_entropy_rows(lb, ans_b);
  CHECK(ra.data()[0] == rb.data()[0]);
  CHECK(ra.data()[1] != rb.data()[1]);  // same logits, different target
}

TEST_CASE("forward_loss equals a hand-assembled answer-rows cross entropy") {
  DecoderLM d = small_decoder(12, 16, 1, 9);
  rng r(10);
  Tensor prefix = Tensor::randn({3, 16}, r, 0.0, 1.0);
  std::vector<int32_t> prompt = {1, 8, 11, 5};
  std::vector<int32_t> answer = {4, 10, 2};
  const double got = forward_loss(d, prefix, prompt, answer).item();

  std::vector<int32_t> input(prompt.begin(), prompt.end());
  input.insert(input.end(), answer.begin(), answer.end() - 1);
  Tensor h = decoder_hidden(d, prefix, input);
  Tensor rows = slice_rows(h, 3 + 4 - 1, 3 + 4 + 3 - 1);
  Tensor per_row = cross_entropy_rows(matmul_nt(rows, d.tok_table), answer);
  const double expect = (per_row.data()[0] + per_row.data()[1] + per_row.data()[2]) / 3.0;
  CHECK(std::abs(got - expect) <= 1e-15);
}

TEST_CASE("input length is prefix plus text, never more, with a named overflow") {
  DecoderLM d = small_decoder(10, 16, 1, 11);
  d.context = 24;
  rng r(12);
  Tensor prefix = Tensor::randn({16, 16}, r, 0.0, 1.0);
  std::vector<int32_t> prompt = {1, 2, 3, 4, 5, 6, 7, 8, 9};  // 16 + 9 + (3-1) = 27 > 24
  std::vector<int32_t> answer = {5, 4, 2};
  CHECK_THROWS_WITH_AS(forward_loss(d, prefix, prompt, answer), doctest::Contains("27"), shape_error);
  CHECK_THROWS_WITH_AS(forward_loss(d, prefix, prompt, answer), doctest::Contains("24"), shape_error);
}

TEST_CASE("contract violations on prompt and answer are rejected") {
  DecoderLM d = small_decoder(10, 16, 1, 13);
  rng r(14);
  Tensor prefix = Tensor::randn({2, 16}, r, 0.0, 1.0);
  std::vector<int32_t> prompt = {1, 5};
  std::vector<int32_t> no_eos = {4, 5};
  std::vector<int32_t> mid_eos = {4, 2, 5, 2};
  std::vector<int32_t> empty;
  CHECK_THROWS_AS(forward_loss(d, prefix, prompt, no_eos), contract_error);
  CHECK_THROWS_AS(forward_loss(d, prefix, prompt, mid_eos), contract_error);
  CHECK_THROWS_AS(forward_loss(d, prefix, empty, no_eos), contract_error);
}

TEST_CASE("rigged decoder generates the planned token then stops at EOS") {
  // prompt [BOS, 5]: the row at rank 1 votes token 6, the row at rank 2 votes EOS
  DecoderLM d = rigged_decoder({4, 6, 2});
  std::vector<int32_t> prompt = {1, 5};
  GenerationSettings s;
  std::vector<int32_t> out = generate(d, Tensor(), prompt, s);
  std::vector<int32_t> expect = {6, 2};
  CHECK(out == expect);
  CHECK(generate(d, Tensor(), prompt, s) == out);  // deterministic

  // a plan that never reaches EOS is capped by max_new_tokens
  DecoderLM loop = rigged_decoder({4, 6, 6, 6, 6, 6, 6, 6});
  s.max_new_tokens = 3;
  std::vector<int32_t> capped = generate(loop, Tensor(), prompt, s);
  std::vector<int32_t> expect3 = {6, 6, 6};
  CHECK(capped == expect3);
}

TEST_CASE("greedy generation matches a step-by-step rescan oracle") {
  DecoderLM d = small_decoder(8, 16, 1, 15, 0.5);
  rng r(16);
  Tensor prefix = Tensor::randn({2, 16}, r, 0.0, 1.0);
  std::vector<int32_t> prompt = {1, 4, 5};
  GenerationSettings s;
  s.max_new_tokens = 2;
  std::vector<int32_t> got = generate(d, prefix, prompt, s);

  auto best_next = [&](const std::vector<int32_t>& ids) {
    Tensor h = decoder_hidden(d, prefix, ids);
    Tensor logits = matmul_nt(slice_rows(h, h.rows() - 1, h.rows()), d.tok_table);
    int32_t best = 0;
    for (int64_t v = 1; v < 8; ++v) {
      if (logits.data()[v] > logits.data()[best]) best = static_cast<int32_t>(v);
    }
    return best;
  };
  std::vector<int32_t> expect;
  std::vector<int32_t> ids = prompt;
  for (int step = 0; step < 2; ++step) {
    const int32_t t = best_next(ids);
    expect.push_back(t);
    if (t == Vocabulary::kEos) break;
    ids.push_back(t);
  }
  CHECK(got == expect);
}

TEST_CASE("pretrain loss starts near ln V and drives every decoder parameter") {
  rng r(17);
  DecoderLM d = make_decoder(30, 16, 2, 2, 64, r, 0.02);
  std::vector<int32_t> line = {1, 9, 12, 25, 7, 14, 2};
  const double loss = pretrain_loss(d, line).item();
  CHECK(std::abs(loss / std::log(30.0) - 1.0) < 0.05);

  {
    TapeScope scope;
    scope.backward(pretrain_loss(d, line));
  }
  int64_t nonzero_groups = 0, groups = 0;
  visit_decoder_params(d, "dec", [&](const std::string&, Tensor& t) {
    ++groups;
    double s = 0.0;
    if (t.has_grad()) {
      for (double g : t.grad()) s += std::abs(g);
    }
    nonzero_groups += s > 0.0 ? 1 : 0;
  });
  CHECK(groups == 2 + 2 * 12 + 2);
  CHECK(nonzero_groups == groups);
}

TEST_CASE("prompt ids lead with BOS and answer ids end with EOS") {
  Vocabulary v = Vocabulary::build({"q : which ? a . b c d answer alpha beta gamma delta"});
  VQARecord rec;
  rec.question = "which ?";
  rec.choices = {"alpha", "beta", "gamma", "delta"};
  rec.gold = 'B';
  auto prompt = prompt_token_ids(v, rec);
  REQUIRE(prompt.size() > 2);
  CHECK(prompt[0] == Vocabulary::kBos);
  for (size_t i = 1; i < prompt.size(); ++i) CHECK(prompt[i] != Vocabulary::kUnk);
  auto answer = answer_token_ids(v, rec, 'B');
  CHECK(answer.back() == Vocabulary::kEos);
  CHECK(detokenize(v, answer) == "b . beta");
}

TEST_CASE("finite differences validate the decoder loss gradients") {
  rng r(19);
  DecoderLM d = make_decoder(6, 8, 2, 1, 32, r, 0.3);
  Tensor prefix = Tensor::randn({2, 8}, r, 0.0, 1.0, true);
  std::vector<int32_t> prompt = {1, 4, 5};
  std::vector<int32_t> answer = {4, 2};

  auto loss_fn = [&]() { return forward_loss(d, prefix, prompt, answer).item(); };
  {
    TapeScope scope;
    scope.backward(forward_loss(d, prefix, prompt, answer));
  }
  std::vector<std::pair<std::string, Tensor>> params = {{"prefix", prefix}};
  visit_decoder_params(d, "dec", [&](const std::string& n, Tensor& t) { params.emplace_back(n, t); });
  auto rep = testing::check_grads(loss_fn, params);
  INFO("worst: ", rep.worst_param, "[", rep.worst_index, "] rel=", rep.max_rel);
  CHECK(rep.max_rel < 1e-4);
}
