// End-to-end walk through the library on synthetic textures: build a small
// patch-pair dataset, train a desk-sized regressor, and score it against the
// identity predictor and the exact oracle cascade.
//
//   homwarp_quickstart [out_dir]
//
// When out_dir is given the first sample's patches are written there as PGM.

#include <cstdio>
#include <filesystem>
#include <vector>

#include "homwarp/homwarp.hpp"

using namespace homwarp;

int main(int argc, char** argv) {
  const ImageCorpus train_corpus = ImageCorpus::synthetic(24, 1);
  const ImageCorpus test_corpus = ImageCorpus::synthetic(8, 2);
  const DataConfig data = DataConfig::desk();
  const auto train = generate_dataset(train_corpus, 4, 11, data);
  const auto test = generate_dataset(test_corpus, 4, 12, data);
  std::printf("train %zu pairs, test %zu pairs, side %d\n", train.size(), test.size(), data.patch_side);

  if (argc > 1) {
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    write_pgm(dir / "patch_a.pgm", train.front().patch_a);
    write_pgm(dir / "patch_b.pgm", train.front().patch_b);
    write_pgm(dir / "patch_a_t.pgm", train.front().patch_a_t);
  }

  TrainConfig tc = TrainConfig::desk();
  tc.decay_steps = 150;  // a short run; the desk preset is the full budget
  tc.seed = 3;
  const auto samples = to_train_samples<float>(train);
  const auto res = train_single<float>(samples, tc, RegressorConfig::desk(), [](const CurvePoint& p) {
    if (p.step % 50 == 0) std::printf("  step %4ld  lr %.4f  loss %.4f\n", p.step, p.lr, p.loss);
  });

  const double baseline = identity_baseline_error(test);
  const double trained = evaluate_single(StagePredictor<float>::network(res.stages.front()), test).mean_error;
  const std::vector<StagePredictor<double>> oracle(2, StagePredictor<double>::oracle());
  const double exact = evaluate_hierarchical<double>(oracle, test, test_corpus).mean_error;

  std::printf("mean corner error on held-out pairs\n");
  std::printf("  identity          %.3f px\n", baseline);
  std::printf("  trained 1-stage   %.3f px\n", trained);
  std::printf("  oracle 2-stage    %.3f px\n", exact);

  // One pair through the cascade, stage by stage.
  const SampleRecord& r = test.front();
  const SourceImage img = test_corpus.load(r.image_index);
  const auto hr = hierarchical_infer<double>(oracle, img.image, r.patch_b, r.rect_x, r.rect_y, r.target());
  std::printf("oracle chain on pair 0: %zu stages, corner error %.2e px\n", hr.chain.stages.size(), *hr.corner_error);
}
