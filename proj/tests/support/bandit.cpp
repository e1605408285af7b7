#include "bandit.hpp"

namespace mtnas::testing {

double run_bandit(std::uint64_t seed, const BanditSetup& setup) {
  ctrl::ControllerConfig cc;
  cc.tasks = 1;
  cc.pool_size = 2;
  cc.max_depth = 1;
  ctrl::ControllerPolicy policy(cc);
  Rng init(mix_seed(seed, 3));
  policy.init_uniform(init);
  train::TrainConfig tc;
  tc.samples_per_task = setup.samples;
  tc.epsilon = setup.epsilon;
  tc.temperature = setup.temperature;
  tc.phi_lr = setup.phi_lr;
  tc.max_depth = 1;
  ad::Adam phi(ad::AdamConfig{.learning_rate = setup.phi_lr});
  ConstantEnvironment env({-0.1, -2.0}, -2.0);
  Rng rng(mix_seed(seed, 1));
  for (std::size_t step = 0; step < setup.steps; ++step) train::train_batch_for_task(policy, phi, env, 0, tc, rng);
  return policy.trace(0).front()[0];
}

}  // namespace mtnas::testing
