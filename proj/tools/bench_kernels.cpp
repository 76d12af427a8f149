// Kernel benchmark: serial reference vs OpenMP variants on transformer-shaped
// matmuls and softmax, plus one full training step at the experiment size.
// The parallel kernels must also agree bitwise with the reference, so the
// comparison doubles as a determinism spot check.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "kehrl/corpus.hpp"
#include "kehrl/encoder.hpp"
#include "kehrl/kernels.hpp"
#include "kehrl/policy.hpp"
#include "kehrl/rng.hpp"
#include "kehrl/synthetic.hpp"
#include "kehrl/tensor.hpp"
#include "kehrl/trainer.hpp"

#include <filesystem>

using namespace kehrl;
namespace fs = std::filesystem;

namespace {

Tensor random_tensor(int r, int c, Rng& rng) {
  Tensor t(r, c);
  for (double& x : t.v) x = rng.normal();
  return t;
}

double time_of(const std::function<void()>& fn, int reps) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
         static_cast<double>(reps);
}

void bench_shape(int m, int k, int n, int reps) {
  Rng rng(17);
  const Tensor a = random_tensor(m, k, rng);
  const Tensor b = random_tensor(k, n, rng);
  Tensor c_ser(m, n), c_omp(m, n);

  const double ts = time_of([&] { kernels::serial::matmul(a, b, c_ser); }, reps);
  const double tp = time_of([&] { kernels::omp::matmul(a, b, c_omp); }, reps);
  const bool same = c_ser.v == c_omp.v;
  std::printf("matmul %4dx%4dx%4d  serial %9.1f us   omp %9.1f us   x%.2f   %s\n", m, k, n,
              ts * 1e6, tp * 1e6, ts / tp, same ? "bitwise-equal" : "MISMATCH");
}

void bench_softmax(int rows, int cols, int reps) {
  Rng rng(23);
  const Tensor x = random_tensor(rows, cols, rng);
  Tensor o_ser(rows, cols), o_omp(rows, cols);
  const double ts = time_of([&] { kernels::serial::softmax_rows(x, o_ser); }, reps);
  const double tp = time_of([&] { kernels::omp::softmax_rows(x, o_omp); }, reps);
  const bool same = o_ser.v == o_omp.v;
  std::printf("softmax %4dx%-4d       serial %9.1f us   omp %9.1f us   x%.2f   %s\n", rows,
              cols, ts * 1e6, tp * 1e6, ts / tp, same ? "bitwise-equal" : "MISMATCH");
}

void bench_train_step() {
  const fs::path dir = fs::temp_directory_path() / "kehrl_bench_world";
  SyntheticConfig sc;
  sc.seed = 5;
  sc.seed_set = true;
  sc.noise_sentences = 16;
  generate_synthetic_world(sc, dir.string());
  const CorpusData data = ingest_corpus({(dir / "corpus.jsonl").string(),
                                         (dir / "kg.tsv").string(),
                                         (dir / "surfaces.tsv").string()});

  EncoderConfig cfg;
  cfg.vocab_size = data.vocab.size();
  cfg.k_hops = 1;
  cfg.token_mask_rate = 0.4;
  Encoder enc(cfg);
  Policy high(cfg.entities_per_sentence, cfg.d);
  Policy low(cfg.triples_per_entity, cfg.d);
  Rng init(0xA11);
  enc.init_params(init);
  high.init_params(init);
  low.init_params(init);

  TrainConfig tc;
  tc.batch_size = 16;
  Trainer tr(enc, high, low, data.store, data.vocab, tc);
  std::vector<const AnnotatedSentence*> batch;
  for (int i = 0; i < tc.batch_size; ++i)
    batch.push_back(&data.sentences[static_cast<std::size_t>(i)]);

  const double t = time_of([&] { tr.step(batch, 1, 0); }, 3);
  std::printf("train step (batch %d, d=%d, %d layers): %7.1f ms\n", tc.batch_size, cfg.d,
              cfg.layers, t * 1e3);
}

}  // namespace

int main() {
  std::printf("omp workers: %d\n", kernels::worker_count());
  const struct { int m, k, n, reps; } shapes[] = {
      {64, 64, 64, 200}, {64, 64, 256, 100}, {15, 64, 4096, 50}, {256, 256, 256, 20},
  };
  for (const auto& s : shapes) bench_shape(s.m, s.k, s.n, s.reps);
  bench_softmax(64, 64, 500);
  bench_softmax(512, 512, 50);
  bench_train_step();
  return 0;
}
