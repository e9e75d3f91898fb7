// Targeted attack on a random 8x8 RGB linear-softmax victim.
//
//   ./toy_attack_example [seed]

#include <cstdlib>
#include <iostream>
#include <memory>

#include "sparsemask/sparsemask.hpp"

using namespace sparsemask;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const Shape shape{3, 8, 8};
  auto model = std::make_shared<LinearSoftmaxModel>(LinearSoftmaxModel::random(shape, 10, {seed, 0}, 0.5));

  const Image x = generate_synthetic(shape, {SynthKind::uniform_continuous}, {seed, 1});
  ScoreOracle bookkeeping(model, 1);
  const auto clean = predicted_label(bookkeeping.query(x));
  const std::size_t source = std::get<std::size_t>(clean);

  LossSpec spec;
  spec.mode = LossMode::targeted_cross_entropy;
  spec.source_class = source;
  spec.target_class = (source + 1) % 10;

  AttackConfig cfg;
  cfg.budget = 6;
  cfg.query_limit = 2000;
  cfg.seed = {seed, 0};

  ScoreOracle oracle(model, cfg.query_limit);
  const AttackResult r = run_attack(x, spec, cfg, oracle);
  std::cout << "source " << source << " -> target " << to_string(*spec.target_class) << ": "
            << (r.success ? "success" : "failure") << " after " << r.queries_used << " queries, sparsity "
            << r.achieved_sparsity << "\n"
            << result_to_json(r).dump(2) << "\n";
  return r.success ? 0 : 1;
}
