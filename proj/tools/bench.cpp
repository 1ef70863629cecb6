#include <chrono>
#include <cstdio>

#include "tgfuse/losses.hpp"
#include "tgfuse/model.hpp"

using namespace tgfuse;

int main() {
  ModelConfig cfg;
  cfg.vocab_size = 17;
  TgModel model(cfg);
  Rng rng(1);
  std::vector<double> px(64 * 64);
  for (auto& v : px) v = rng.uniform();
  Tensor image({64, 64, 1}, px);
  std::vector<double> m(64 * 64);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (i % 64 < 20 && i / 64 < 20) ? 1.0 : 0.0;
  Tensor mask({64, 64}, m);
  TokenIds toks{1, 4, 5, 6, 7, 8, 9, 10, 11, 12, 2};
  std::printf("params: %zu tensors\n", model.parameters().size());
  std::size_t n = 0;
  for (auto* p : model.parameters()) n += p->size();
  std::printf("scalars: %zu\n", n);
  const int reps = 20;
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) {
    Context ctx;
    (void)model.forward(ctx, image, toks);
  }
  auto t1 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) {
    Tape tape;
    Context ctx(tape);
    auto pred = model.forward(ctx, image, toks);
    auto loss = total_loss(pred, mask, Tensor::zeros({4}));
    tape.backward(loss.total);
  }
  auto t2 = std::chrono::steady_clock::now();
  std::printf("forward: %.3f ms\n", std::chrono::duration<double, std::milli>(t1 - t0).count() / reps);
  std::printf("fwd+bwd: %.3f ms\n", std::chrono::duration<double, std::milli>(t2 - t1).count() / reps);
}
