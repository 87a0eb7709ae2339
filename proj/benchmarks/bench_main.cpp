#include <benchmark/benchmark.h>

#include <random>

#include "dirsurf/eval.hpp"
#include "dirsurf/nets.hpp"
#include "dirsurf/scenes.hpp"
#include "dirsurf/tape.hpp"
#include "dirsurf/train.hpp"

using namespace dirsurf;

namespace {

nets::NetworkConfig desk_net() {
  nets::NetworkConfig n;
  n.dim = 2;
  n.sdf_width = 32;
  n.sdf_depth = 3;
  n.radiance_width = 32;
  n.radiance_depth = 2;
  n.feature_dim = 8;
  return n;
}

Eigen::MatrixXd random_points(int dim, int n) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd p(dim, n);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = u(rng);
  return p;
}

// SDF forward with spatial tangents and the full reverse pass over a batch.
void BM_SdfBatchForwardBackward(benchmark::State& state) {
  const auto net = desk_net();
  const auto bundle = nets::make_field_bundle(net, nets::PeConfig{2, true}, true, 0.3, 0);
  const Eigen::MatrixXd pts = random_points(2, static_cast<int>(state.range(0)));
  std::vector<Eigen::MatrixXd> jac;
  const Eigen::MatrixXd x = nets::pe_encode_batch(pts, net.position_pe, &jac);
  nets::Mlp grads = nets::Mlp::zeros(bundle.sdf.cfg);
  nets::MlpBatch b;
  for (auto _ : state) {
    b.forward(bundle.sdf, x, jac);
    Eigen::MatrixXd out_adj = Eigen::MatrixXd::Ones(b.output().rows(), x.cols());
    std::vector<Eigen::MatrixXd> t_adj(2, out_adj);
    benchmark::DoNotOptimize(b.backward(bundle.sdf, out_adj, t_adj, grads));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SdfBatchForwardBackward)->Arg(64)->Arg(1024);

// Record and reverse a chain of scalar ops.
void BM_TapeChain(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  ad::Tape tape;
  for (auto _ : state) {
    tape.clear();
    ad::Var x = tape.parameter(0.3);
    ad::Var acc(0.0);
    for (int i = 0; i < n; ++i) acc = acc + ad::tanh(x * ad::Var(1.0 + 1e-3 * i));
    benchmark::DoNotOptimize(tape.backward(acc));
  }
  state.SetItemsProcessed(state.iterations() * n * 3);
}
BENCHMARK(BM_TapeChain)->Arg(1000)->Arg(100000);

void BM_MarchingSquares(benchmark::State& state) {
  const auto scene = scenes::builtin_scene("flat2d-lshape");
  const auto oracle = eval::analytic_oracle(scene.sdf);
  const int res = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval::marching_squares(oracle, eval::cube_bounds(2), res));
}
BENCHMARK(BM_MarchingSquares)->Arg(128)->Arg(512);

void BM_MarchingCubes(benchmark::State& state) {
  const auto scene = scenes::builtin_scene("sphere3d");
  const auto oracle = eval::analytic_oracle(scene.sdf);
  for (auto _ : state) benchmark::DoNotOptimize(eval::marching_cubes(oracle, eval::cube_bounds(3), 64));
}
BENCHMARK(BM_MarchingCubes);

void BM_ChamferDistance(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::vector<Vec3> p, q;
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 6.283185307179586);
  for (int i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng);
    p.emplace_back(0.5 * std::cos(a), 0.5 * std::sin(a), 0.0);
    q.emplace_back(0.52 * std::cos(b), 0.52 * std::sin(b), 0.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::chamfer_distance(p, q));
}
BENCHMARK(BM_ChamferDistance)->Arg(10000);

// One optimizer step on the desk configuration.
void BM_TrainStep(benchmark::State& state) {
  const auto scene = scenes::builtin_scene("flat2d-disk");
  const auto ds = scenes::generate_dataset(scene, scenes::default_rig(2, scenes::default_rig_config(2)), 7);
  train::TrainConfig tcfg;
  tcfg.iterations = 1000000;
  tcfg.rays_per_batch = 32;
  tcfg.eikonal_points = 32;
  tcfg.eval_every = 0;
  tcfg.checkpoint_every = 0;
  dirparam::DirectionalConfig dcfg;
  const auto net = desk_net();
  train::Trainer trainer(ds, nets::make_field_bundle(net, dcfg.direction_pe, true, dcfg.gamma_b_init, 1), dcfg, tcfg,
                         render::SamplingConfig{16, 16, true}, train::LossWeights{}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step());
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
