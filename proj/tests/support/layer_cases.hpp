#pragma once

// One finite-difference check per layer type; each returns the relative
// gradient error for inputs drawn from `rng`.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace swpc::testing {

struct LayerCase {
  std::string name;
  std::function<double(std::mt19937_64&)> run;
};

inline std::vector<LayerCase> layer_cases() {
  using ad::Tape;
  using ad::Var;
  using In = std::span<const Var>;
  std::vector<LayerCase> cases;
  cases.push_back({"temporal_conv", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({2, 2, 3, 11}, rng), random_tensor({3, 2, 4}, rng)};
                     return gradcheck([](Tape& t, In v) { return project(t, ad::conv2d_temporal(t, v[0], v[1]), 1); },
                                      in);
                   }});
  cases.push_back({"depthwise_conv", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({2, 2, 3, 9}, rng), random_tensor({4, 3, 3}, rng)};
                     return gradcheck(
                         [](Tape& t, In v) { return project(t, ad::conv2d_depthwise(t, v[0], v[1], 2), 2); }, in);
                   }});
  cases.push_back({"pointwise_conv", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({2, 3, 1, 5}, rng), random_tensor({4, 3}, rng)};
                     return gradcheck([](Tape& t, In v) { return project(t, ad::conv2d_pointwise(t, v[0], v[1]), 3); },
                                      in);
                   }});
  cases.push_back({"batchnorm_train", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({3, 2, 2, 5}, rng), random_tensor({2}, rng, 0.5, 1.5),
                                                  random_tensor({2}, rng)};
                     return gradcheck(
                         [](Tape& t, In v) {
                           ad::BatchNormState st{{0, 0}, {1, 1}};
                           return project(t, ad::batchnorm(t, v[0], v[1], v[2], st, ad::BatchNormMode::train), 4);
                         },
                         in);
                   }});
  cases.push_back({"batchnorm_eval", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({3, 2, 1, 4}, rng), random_tensor({2}, rng, 0.5, 1.5),
                                                  random_tensor({2}, rng)};
                     return gradcheck(
                         [](Tape& t, In v) {
                           ad::BatchNormState st{{0.2, -0.1}, {1.5, 0.7}};
                           return project(t, ad::batchnorm(t, v[0], v[1], v[2], st, ad::BatchNormMode::eval), 5);
                         },
                         in);
                   }});
  cases.push_back({"elu", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({2, 3, 1, 7}, rng)};
                     return gradcheck([](Tape& t, In v) { return project(t, ad::elu(t, v[0]), 6); }, in);
                   }});
  cases.push_back({"avgpool", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({2, 2, 1, 11}, rng)};
                     return gradcheck([](Tape& t, In v) { return project(t, ad::avgpool_time(t, v[0], 4), 7); }, in);
                   }});
  cases.push_back({"dropout", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({2, 2, 1, 8}, rng)};
                     return gradcheck(
                         [](Tape& t, In v) {
                           std::mt19937_64 mask(99);
                           return project(t, ad::dropout(t, v[0], 0.25, &mask), 8);
                         },
                         in);
                   }});
  cases.push_back({"dense_flatten", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({3, 2, 1, 3}, rng), random_tensor({4, 6}, rng),
                                                  random_tensor({4}, rng)};
                     return gradcheck(
                         [](Tape& t, In v) { return project(t, ad::dense(t, ad::flatten(t, v[0]), v[1], v[2]), 9); },
                         in);
                   }});
  cases.push_back({"softmax", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({3, 4}, rng, -2.0, 2.0)};
                     return gradcheck([](Tape& t, In v) { return project(t, ad::softmax(t, v[0]), 10); }, in);
                   }});
  cases.push_back({"cross_entropy", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({4, 3}, rng, -2.0, 2.0)};
                     const std::vector<std::size_t> targets{0, 2, 1, 2};
                     return gradcheck([targets](Tape& t, In v) { return ad::cross_entropy(t, v[0], targets); }, in);
                   }});
  cases.push_back({"l2_normalize_kernel", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)};
                     return gradcheck(
                         [](Tape& t, In v) {
                           return ad::gaussian_kernel_similarity(t, ad::l2_normalize(t, v[0]), ad::l2_normalize(t, v[1]),
                                                                 2.0);
                         },
                         in);
                   }});
  cases.push_back({"arithmetic", [](std::mt19937_64& rng) {
                     const std::vector<Tensor> in{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
                     return gradcheck(
                         [](Tape& t, In v) {
                           return ad::sum(t, ad::scale(t, ad::add(t, ad::mul(t, v[0], v[1]), v[0]), -0.7));
                         },
                         in);
                   }});
  return cases;
}

}  // namespace swpc::testing
