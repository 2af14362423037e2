#include <catch2/catch_amalgamated.hpp>

#include "hgan/nn_ops.hpp"
#include "hgan/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace hgan;
using testsupport::max_grad_rel_err;
using testsupport::random_tensor;

TEST_CASE("elementwise ops and reductions gradcheck") {
  Rng rng(7);
  Tensor a = random_tensor({2, 3, 4}, rng, true);
  Tensor b = random_tensor({2, 3, 4}, rng, true, 0.2, 1.0);

  CHECK(max_grad_rel_err({a, b}, [&] { return mean_all(mul(add(a, b), sub(a, b))); }) < 1e-6);
  CHECK(max_grad_rel_err({a}, [&] { return sum_all(square(scale(a, 1.7))); }) < 1e-6);
  CHECK(max_grad_rel_err({a}, [&] { return mean_all(tanh_t(add_scalar(a, 0.3))); }) < 1e-6);
  CHECK(max_grad_rel_err({b}, [&] { return mean_all(gelu(b)); }) < 1e-6);
  // Kinked ops checked away from their kinks.
  CHECK(max_grad_rel_err({b}, [&] { return mean_all(abs_t(b)); }) < 1e-6);
  CHECK(max_grad_rel_err({b}, [&] { return mean_all(relu(add_scalar(b, -0.6))); }, 1e-4) < 1e-4);
  CHECK(max_grad_rel_err({b}, [&] { return mean_all(leaky_relu(add_scalar(b, -0.6), 0.2)); }, 1e-4) <
        1e-4);
}

TEST_CASE("matmul family gradcheck") {
  Rng rng(11);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 5}, rng, true);
  CHECK(max_grad_rel_err({a, b}, [&] { return mean_all(matmul(a, b)); }) < 1e-6);

  Tensor x = random_tensor({2, 3, 4}, rng, true);
  Tensor w = random_tensor({4, 6}, rng, true);
  Tensor bias = random_tensor({6}, rng, true);
  CHECK(max_grad_rel_err({x, w, bias}, [&] { return mean_all(square(linear(x, w, bias))); }) < 1e-6);

  Tensor p = random_tensor({3, 2, 4}, rng, true);
  Tensor q = random_tensor({3, 4, 2}, rng, true);
  CHECK(max_grad_rel_err({p, q}, [&] { return mean_all(square(bmm(p, q))); }) < 1e-6);
}

TEST_CASE("shape ops gradcheck") {
  Rng rng(13);
  Tensor a = random_tensor({2, 3, 4}, rng, true);
  Tensor b = random_tensor({2, 2, 4}, rng, true);
  CHECK(max_grad_rel_err({a}, [&] { return mean_all(square(reshape(a, {6, 4}))); }) < 1e-6);
  CHECK(max_grad_rel_err({a}, [&] { return mean_all(square(permute(a, {2, 0, 1}))); }) < 1e-6);
  CHECK(max_grad_rel_err({a, b}, [&] { return mean_all(square(concat({a, b}, 1))); }) < 1e-6);

  Tensor pos = random_tensor({1, 3, 4}, rng, true);
  CHECK(max_grad_rel_err({a, pos}, [&] { return mean_all(square(add_broadcast_batch(a, pos))); }) <
        1e-6);
}

TEST_CASE("conv2d gradcheck") {
  Rng rng(17);
  Tensor x = random_tensor({2, 3, 6, 6}, rng, true);
  Tensor w = random_tensor({4, 3, 3, 3}, rng, true, -0.5, 0.5);
  Tensor b = random_tensor({4}, rng, true, -0.2, 0.2);
  CHECK(max_grad_rel_err({x, w, b}, [&] { return mean_all(square(conv2d(x, w, b, 1, 1))); }) < 1e-6);
  CHECK(max_grad_rel_err({x, w, b}, [&] { return mean_all(square(conv2d(x, w, b, 2, 1))); }) < 1e-6);

  Tensor w4 = random_tensor({2, 3, 4, 4}, rng, true, -0.5, 0.5);
  Tensor b4 = random_tensor({2}, rng, true, -0.2, 0.2);
  CHECK(max_grad_rel_err({x, w4, b4}, [&] { return mean_all(square(conv2d(x, w4, b4, 2, 1))); }) <
        1e-6);
}

TEST_CASE("conv_transpose2d matches shape and gradcheck") {
  Rng rng(19);
  Tensor x = random_tensor({2, 4, 3, 3}, rng, true);
  Tensor w = random_tensor({4, 3, 3, 3}, rng, true, -0.5, 0.5);
  Tensor b = random_tensor({3}, rng, true, -0.2, 0.2);
  Tensor y = conv_transpose2d(x, w, b, 2, 1, 1);
  CHECK(y.shape() == Shape{2, 3, 6, 6});
  CHECK(max_grad_rel_err({x, w, b}, [&] {
          return mean_all(square(conv_transpose2d(x, w, b, 2, 1, 1)));
        }) < 1e-6);
}

TEST_CASE("padding and pooling gradcheck") {
  Rng rng(23);
  Tensor x = random_tensor({1, 2, 5, 5}, rng, true);
  Tensor y = reflect_pad2d(x, 2);
  CHECK(y.shape() == Shape{1, 2, 9, 9});
  CHECK(max_grad_rel_err({x}, [&] { return mean_all(square(reflect_pad2d(x, 2))); }) < 1e-6);

  Tensor z = random_tensor({2, 3, 4, 4}, rng, true);
  CHECK(maxpool2d(z).shape() == Shape{2, 3, 2, 2});
  CHECK(max_grad_rel_err({z}, [&] { return mean_all(square(maxpool2d(z))); }, 1e-5) < 1e-4);
  CHECK(max_grad_rel_err({z}, [&] { return mean_all(square(global_avg_pool(z))); }) < 1e-6);
}

TEST_CASE("normalization gradcheck") {
  Rng rng(29);
  Tensor x = random_tensor({2, 3, 4, 4}, rng, true);
  Tensor gamma = random_tensor({3}, rng, true, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng, true, -0.3, 0.3);
  CHECK(max_grad_rel_err({x, gamma, beta}, [&] {
          return mean_all(square(instance_norm2d(x, gamma, beta)));
        }) < 1e-5);

  Tensor t = random_tensor({3, 4, 6}, rng, true);
  Tensor g2 = random_tensor({6}, rng, true, 0.5, 1.5);
  Tensor b2 = random_tensor({6}, rng, true, -0.3, 0.3);
  CHECK(max_grad_rel_err({t, g2, b2}, [&] { return mean_all(square(layer_norm(t, g2, b2))); }) <
        1e-5);
}

TEST_CASE("softmax and cross entropy gradcheck") {
  Rng rng(31);
  Tensor x = random_tensor({3, 5}, rng, true);
  CHECK(max_grad_rel_err({x}, [&] { return mean_all(square(softmax_last(x))); }) < 1e-6);

  std::vector<int64_t> labels{1, 3, 0};
  CHECK(max_grad_rel_err({x}, [&] { return cross_entropy_logits(x, labels); }) < 1e-6);

  Tensor tok = random_tensor({2, 4, 3}, rng, true);
  CHECK(max_grad_rel_err({tok}, [&] { return mean_all(square(mean_tokens(tok))); }) < 1e-6);
}

TEST_CASE("no-grad mode and detach cut the graph") {
  Tensor a = Tensor::param({2});
  a.data() = {1.0, 2.0};
  {
    NoGradGuard guard;
    Tensor y = mean_all(square(a));
    CHECK_FALSE(y.requires_grad());
  }
  Tensor d = a.detach();
  Tensor y = mean_all(square(d));
  CHECK_FALSE(y.requires_grad());

  Tensor z = mean_all(square(a));
  z.backward();
  CHECK(a.grad()[0] == Catch::Approx(1.0));
  CHECK(a.grad()[1] == Catch::Approx(2.0));
}

TEST_CASE("backward accumulates through shared subgraphs") {
  Tensor a = Tensor::param({1});
  a.data() = {3.0};
  Tensor s = square(a);           // a^2
  Tensor y = add(s, s);           // 2 a^2 -> dy/da = 4a = 12
  mean_all(y).backward();
  CHECK(a.grad()[0] == Catch::Approx(12.0));
}
